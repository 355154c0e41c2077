"""Interior-penalty discontinuous Galerkin eigensolver for acoustic vibrations.

Displacement and pressure formulations on 2D triangular meshes, with
symmetric (SIP), incomplete (IIP) and nonsymmetric (NIP) penalty variants,
plus spurious-mode scans, convergence-order fitting and a cost benchmark.
"""
__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    ProblemConfig,
    benchmark,
    convergence_study,
    fit_convergence,
    solve_problem,
    spurious_scan,
)
from .assembly import (  # noqa: E402
    DgFormConfig,
    DgSpace,
    assemble_mass_disp,
    assemble_mass_pressure,
    assemble_stiffness_disp,
    assemble_stiffness_pressure,
)
from .coefficients import builtin_density, density_bounds, make_density, stabilization_preset  # noqa: E402,E501
from .eigensolve import (  # noqa: E402
    Spectrum,
    dense_generalized_eig,
    filter_physical,
    shift_invert_arnoldi,
)
from .mesh import TriMesh, generate_rect_mesh, import_mesh  # noqa: E402

__all__ = [
    "ProblemConfig", "benchmark", "convergence_study", "fit_convergence", "solve_problem",
    "spurious_scan", "DgFormConfig", "DgSpace", "assemble_mass_disp", "assemble_mass_pressure",
    "assemble_stiffness_disp", "assemble_stiffness_pressure", "builtin_density",
    "density_bounds", "make_density", "stabilization_preset", "Spectrum",
    "dense_generalized_eig", "filter_physical", "shift_invert_arnoldi", "TriMesh",
    "generate_rect_mesh", "import_mesh", "__version__",
]
