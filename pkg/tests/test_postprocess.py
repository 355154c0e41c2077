import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acoustodg.analysis import ProblemConfig, solve_problem
from acoustodg.assembly import SCALAR, VECTOR2, DgSpace, assemble_mass_disp, \
    assemble_mass_pressure
from acoustodg.coefficients import builtin_density
from acoustodg.fem_core import eval_basis
from acoustodg.mesh import TriMesh, generate_rect_mesh
from acoustodg.postprocess import (
    DgFunction,
    ZeroFrequencyError,
    align,
    coefficients_csv,
    correlation,
    displacement_from_pressure,
    embed,
    pressure_from_displacement,
    project,
    samples_csv,
)
from oracles import interpolation_h1_seminorm_error, l2_error

CONST = builtin_density("const1")


def perturbed(n=4, seed=2):
    rng = np.random.default_rng(seed)
    m = generate_rect_mesh(1, 1, n)
    V = m.vertices.copy()
    inner = (V > 0).all(axis=1) & (V < 1).all(axis=1)
    V[inner] += rng.uniform(-0.2, 0.2, (inner.sum(), 2)) / n
    return TriMesh.from_arrays(V, m.triangles)


def dg_evaluator(f: DgFunction):
    """Evaluate a DG function at physical points of element e (oracle side)."""
    mesh = f.space.mesh
    B = f.blocks()

    def ev(e, X):
        a, b, c = mesh.vertices[mesh.triangles[e]]
        J = np.column_stack([b - a, c - a])
        xi = np.linalg.solve(J, (X - a).T).T
        return B[e] @ eval_basis(f.space.degree, xi)

    return ev


def test_linear_field_gives_constant_pressure():
    space = DgSpace(perturbed(), 2, VECTOR2)
    u = project(space, lambda x, y: (x, 0 * y))
    p = pressure_from_displacement(u, CONST)
    ref = project(DgSpace(space.mesh, 2, SCALAR), lambda x, y: -1 + 0 * x)
    assert np.max(np.abs(p.coeffs - ref.coeffs)) <= 1e-12


def test_divergence_free_field_gives_zero_pressure():
    space = DgSpace(perturbed(), 3, VECTOR2)
    # curl of psi = x^2 y^2 + x^3: (d psi/dy, -d psi/dx)
    u = project(space, lambda x, y: (2 * x ** 2 * y, -(2 * x * y ** 2 + 3 * x ** 2)))
    p = pressure_from_displacement(u, builtin_density("rho2"))
    assert np.max(np.abs(p.coeffs)) <= 1e-11


def interpolant_in_dg(space, f):
    """Lagrange interpolant of ``f`` on the equispaced lattice, as a DgFunction."""
    k = space.degree
    lat = np.array([(i / k, j / k) for j in range(k + 1) for i in range(k + 1 - j)])
    mesh = space.mesh
    V = eval_basis(k, lat)
    out = []
    for tri in mesh.triangles:
        a, b, c = mesh.vertices[tri]
        X = a + lat @ np.column_stack([b - a, c - a]).T
        out.append(np.linalg.solve(V.T, f(X[:, 0], X[:, 1])))
    return DgFunction(space, np.concatenate(out))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_cosine_mode_recovery(k):
    """p = cos(pi x), omega^2 = pi^2 -> u = (-sin(pi x)/pi, 0).  Starting from
    the P_k interpolant of p, the recovered displacement is exact up to the
    P_k interpolation error (gradient seminorm, scaled by 1/omega^2)."""
    mesh = perturbed(4)
    omega2 = math.pi ** 2
    p = interpolant_in_dg(DgSpace(mesh, k, SCALAR), lambda x, y: np.cos(np.pi * x))
    u = displacement_from_pressure(p, omega2, CONST)

    def exact(x, y):
        return np.array([-np.sin(np.pi * x) / np.pi, 0 * y])

    err = l2_error(mesh.vertices, mesh.triangles, dg_evaluator(u), exact)
    interp = interpolation_h1_seminorm_error(
        mesh.vertices, mesh.triangles, k, lambda x, y: np.cos(np.pi * x),
        lambda x, y: np.array([-np.pi * np.sin(np.pi * x), 0 * y])) / omega2
    assert err <= interp * (1 + 1e-9)
    assert err >= interp * (1 - 1e-9)  # the recovery itself adds no error


def test_zero_frequency_guard():
    space = DgSpace(generate_rect_mesh(1, 1, 2), 1, SCALAR)
    p = project(space, lambda x, y: 1 + 0 * x)
    with pytest.raises(ZeroFrequencyError):
        displacement_from_pressure(p, 0.0, CONST)
    with pytest.raises(ZeroFrequencyError):
        displacement_from_pressure(p, 1e-11, CONST)


@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_pressure_recovery_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    space = DgSpace(generate_rect_mesh(1, 1.1, 2), 2, VECTOR2)
    u = DgFunction(space, rng.normal(size=space.ndof))
    v = DgFunction(space, rng.normal(size=space.ndof))
    rho = builtin_density("rho1")
    lhs = pressure_from_displacement(a * u + b * v, rho).coeffs
    rhs = (a * pressure_from_displacement(u, rho) + b * pressure_from_displacement(v, rho)).coeffs
    assert np.allclose(lhs, rhs, atol=1e-11 * (1 + np.abs(rhs).max()))


def test_correlation_examples():
    space = DgSpace(generate_rect_mesh(1, 1, 2), 1, SCALAR)
    W = assemble_mass_pressure(space, CONST)
    f = project(space, lambda x, y: x + 0 * y)
    assert correlation(f, f, W) == pytest.approx(1.0, abs=1e-15)
    assert correlation(f, -3.0 * f, W) == pytest.approx(1.0, abs=1e-15)
    g = project(space, lambda x, y: x - 0.5 + 0 * y)
    one = project(space, lambda x, y: 1 + 0 * x)
    # x - 1/2 is L2-orthogonal to constants on the unit square
    assert correlation(g, one, W) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        correlation(f, 0.0 * f, W)
    other = DgSpace(generate_rect_mesh(1, 1, 3), 1, SCALAR)
    with pytest.raises(ValueError):
        correlation(f, project(other, lambda x, y: x), W)


def test_align_sign_and_phase():
    space = DgSpace(generate_rect_mesh(1, 1, 2), 1, SCALAR)
    W = assemble_mass_pressure(space, CONST)
    f = project(space, lambda x, y: np.sin(x + y))
    assert np.allclose(align(f, -2.0 * f, W).coeffs, 2.0 * f.coeffs)
    z = DgFunction(space, f.coeffs * np.exp(1.1j))
    out = align(f, z, W)
    assert np.allclose(out.coeffs, f.coeffs, atol=1e-14)


def test_correlation_of_two_safe_penalties():
    base = ProblemConfig(mesh="rect 1 1 8", k=2, density="const1", preset="plus1-10", nev=1)
    a = solve_problem(base)
    b = solve_problem(base.replace(preset="plus1-20"))
    # the first mode is double (pi^2 twice); compare the captured fraction
    W = assemble_mass_disp(a.space, a.coeff)
    Va = a.spectrum.vectors[:, :1].real
    sb = solve_problem(base.replace(preset="plus1-20", nev=2))
    Vb = sb.spectrum.vectors.real
    G = Vb.T @ (W @ Vb)
    proj = Vb @ np.linalg.solve(G, Vb.T @ (W @ Va))
    frac = float(proj[:, 0] @ (W @ proj[:, 0]) / (Va[:, 0] @ (W @ Va[:, 0])))
    assert math.sqrt(frac) >= 0.999
    # a simple mode on the 1 x 1.1 rectangle: plain correlation
    rc = ProblemConfig(mesh="rect 1 1.1 8", k=2, density="rho1", preset="plus1-10", nev=1)
    s1, s2 = solve_problem(rc), solve_problem(rc.replace(preset="sum4"))
    W = assemble_mass_disp(s1.space, s1.coeff)
    c = correlation(s1.spectrum.vectors[:, 0].real, s2.spectrum.vectors[:, 0].real, W)
    assert c >= 0.999
    assert b.spectrum.values[0].real == pytest.approx(a.spectrum.values[0].real, rel=1e-4)


@pytest.fixture(scope="module")
def rho1_modes():
    cfg = ProblemConfig(mesh="rect 1 1.1 8", k=3, density="rho1", preset="plus1-10", nev=3)
    return (solve_problem(cfg), solve_problem(cfg.replace(formulation="pressure")))


def test_recovered_pressure_nonzero(rho1_modes):
    disp, _ = rho1_modes
    W = assemble_mass_disp(disp.space, disp.coeff)
    for j, lam in enumerate(disp.spectrum.values):
        assert lam.real > 1
        u = DgFunction(disp.space, disp.spectrum.vectors[:, j].real)
        p = pressure_from_displacement(u, disp.coeff)
        nu = math.sqrt(u.coeffs @ (W @ u.coeffs))
        assert np.linalg.norm(p.coeffs) > 1e-8 * nu


def test_cross_formulation_mode_correlation(rho1_modes):
    disp, pres = rho1_modes
    u = DgFunction(disp.space, disp.spectrum.vectors[:, 0].real)
    p = DgFunction(pres.space, pres.spectrum.vectors[:, 0].real)
    Wp = assemble_mass_pressure(pres.space, pres.coeff)
    assert correlation(pressure_from_displacement(u, disp.coeff), p, Wp) >= 0.999
    Wu = assemble_mass_disp(disp.space, disp.coeff)
    omega2 = pres.spectrum.omega2[0]
    assert correlation(displacement_from_pressure(p, omega2, pres.coeff), u, Wu) >= 0.999


def test_round_trip(rho1_modes):
    disp, _ = rho1_modes
    W = assemble_mass_disp(disp.space, disp.coeff)
    u = DgFunction(disp.space, disp.spectrum.vectors[:, 0].real)
    p = pressure_from_displacement(u, disp.coeff)
    back = displacement_from_pressure(p, disp.spectrum.omega2[0], disp.coeff)
    back = align(u, back, W)
    d = back.coeffs - u.coeffs
    rel = math.sqrt(d @ (W @ d) / (u.coeffs @ (W @ u.coeffs)))
    assert rel <= 1e-2


def test_embed_preserves_function():
    space = DgSpace(perturbed(), 1, VECTOR2)
    u = project(space, lambda x, y: (1 + x, 2 * y - x))
    v = embed(u, 3)
    assert v.space.degree == 3
    assert np.allclose(pressure_from_displacement(v, CONST).blocks()[:, 0, :3],
                       pressure_from_displacement(u, CONST).blocks()[:, 0, :3].real, atol=1e-13)
    with pytest.raises(ValueError):
        embed(v, 2)


def test_exports():
    space = DgSpace(generate_rect_mesh(1, 1, 1), 1, VECTOR2)
    u = project(space, lambda x, y: (x, y))
    lines = coefficients_csv(u).splitlines()
    assert lines[0] == "element,component,basis,re,im"
    assert len(lines) == 1 + space.ndof
    s = samples_csv(u, subdivisions=2).splitlines()
    assert s[0] == "element,x,y,re_x,im_x,re_y,im_y"
    assert len(s) == 1 + 2 * 6
    # sampled values reproduce the linear field exactly
    for row in s[1:]:
        _, x, y, ux, _, uy, _ = map(float, row.split(","))
        assert ux == pytest.approx(x, abs=1e-13) and uy == pytest.approx(y, abs=1e-13)
    with pytest.raises(ValueError):
        DgFunction(space, np.zeros(3))
