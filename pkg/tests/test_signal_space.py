import numpy as np
import pytest
from hypothesis import given, strategies as st

from pocsrecon.errors import (
    ConfigError, DimensionError, PreconditionError, UnsupportedConfigurationError,
)
from pocsrecon.signal_space import (
    GridSignal, GridSpec, MultiSignal, SignalSpace, dirichlet_kernel, evaluate,
    inner_product, is_bandlimited, norm, project_B, random_bandlimited, spectral_derivative,
)
from conftest import fourier_eval

seeds = st.integers(0, 2**32 - 1)


def white(spec, seed):
    return GridSignal(spec, np.random.default_rng(seed).standard_normal(spec.grid_len))


# -- GridSpec / GridSignal ----------------------------------------------------

def test_gridspec_fields():
    s = GridSpec(41, 16)
    assert s.grid_len == 656 and s.dt == 1 / 16 and s.n_harmonics == 20
    with pytest.raises(ConfigError):
        GridSpec(41, 4)
    with pytest.raises(ConfigError):
        GridSpec(0, 16)


def test_even_period_rejected():
    with pytest.raises(UnsupportedConfigurationError):
        dirichlet_kernel(0.0, GridSpec(40, 16))


def test_bandlimited_flag_validated(spec41):
    with pytest.raises(PreconditionError):
        GridSignal(spec41, white(spec41, 0).values, bandlimited=True)


def test_values_are_read_only(spec41):
    x = random_bandlimited(spec41, seed=1)
    with pytest.raises(ValueError):
        x.values[0] = 1.0


# -- inner product ------------------------------------------------------------

def test_constant_norm_is_period(spec41):
    one = GridSignal(spec41, np.ones(spec41.grid_len))
    assert inner_product(one, one) == pytest.approx(41.0, rel=1e-14)


@given(seeds, seeds)
def test_inner_product_symmetric_and_positive(a, b):
    spec = GridSpec(11, 16)
    u, v = white(spec, a), white(spec, b)
    assert inner_product(u, v) == pytest.approx(inner_product(v, u), rel=1e-13)
    assert inner_product(u, u) > 0
    z = GridSignal(spec, np.zeros(spec.grid_len))
    assert inner_product(z, z) == 0


def test_inner_product_mismatch(spec41, spec11):
    with pytest.raises(DimensionError):
        inner_product(random_bandlimited(spec41, seed=0), random_bandlimited(spec11, seed=0))
    with pytest.raises(DimensionError):
        inner_product(MultiSignal.zeros(spec41, 2), MultiSignal.zeros(spec41, 3))


def test_multichannel_inner_product_sums_channels(spec11):
    a, b = random_bandlimited(spec11, seed=1), random_bandlimited(spec11, seed=2)
    m = MultiSignal.from_channels([a, b])
    assert inner_product(m, m) == pytest.approx(inner_product(a, a) + inner_product(b, b))


# -- project_B ----------------------------------------------------------------

@given(seeds, seeds)
def test_project_B_projection_properties(a, b):
    spec = GridSpec(11, 16)
    u, v = white(spec, a), white(spec, b)
    pu = project_B(u)
    assert is_bandlimited(pu.values, spec)
    assert np.allclose(project_B(pu).values, pu.values, atol=1e-12 * np.abs(pu.values).max())
    # self-adjoint
    lhs, rhs = inner_product(pu, v), inner_product(u, project_B(v))
    assert abs(lhs - rhs) <= 1e-12 * norm(u) * norm(v)
    # Pythagoras
    r = u - pu
    assert norm(u) ** 2 == pytest.approx(norm(pu) ** 2 + norm(r) ** 2, rel=1e-10)
    assert norm(pu) <= norm(u)


@given(seeds, seeds)
def test_inner_product_only_sees_bandlimited_part(a, b):
    spec = GridSpec(11, 16)
    u = white(spec, a)
    v = random_bandlimited(spec, seed=b)
    assert abs(inner_product(u, v) - inner_product(project_B(u), v)) <= 1e-12 * norm(u)


def test_project_B_identity_on_bandlimited(spec41):
    x = random_bandlimited(spec41, seed=3)
    assert np.allclose(project_B(x).values, x.values, atol=1e-12)


def test_project_B_of_scaled_delta_is_dirichlet(spec41):
    delta = np.zeros(spec41.grid_len)
    delta[0] = spec41.rate_R
    pb = project_B(GridSignal(spec41, delta)).values
    # closed form written out independently of dirichlet_kernel
    t = spec41.times
    T = spec41.period_T
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.sin(np.pi * t) / (T * np.sin(np.pi * t / T))
    d[0] = 1.0
    assert np.abs(pb - d).max() <= 1e-12


# -- Dirichlet kernel ---------------------------------------------------------

def test_reproducing_property_random(spec41):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        x = random_bandlimited(spec41, seed=rng)
        t0 = rng.uniform(0, 41)
        got = inner_product(x, dirichlet_kernel(t0, spec41))
        want = fourier_eval(x.values, spec41, t0)[0]
        worst = max(worst, abs(got - want))
    assert worst <= 1e-10


@pytest.mark.parametrize("m", [0, 1, 7, 20])
def test_reproducing_property_on_harmonics(spec41, m):
    x = GridSignal(spec41, np.cos(2 * np.pi * m * spec41.times / 41), True)
    t0 = spec41.times[37]
    got = inner_product(x, dirichlet_kernel(t0, spec41))
    assert got == pytest.approx(np.cos(2 * np.pi * m * t0 / 41), abs=1e-12)


def test_dirichlet_zeros_at_integer_shifts(spec41):
    d = dirichlet_kernel(0.0, spec41).values
    R = spec41.rate_R
    assert d[0] == 1.0
    assert np.abs(d[R * np.arange(1, 41)]).max() <= 1e-13


def test_dirichlet_near_grid_point_is_bandlimited(spec41):
    # centres a hair away from grid points used to lose precision
    for t0 in (spec41.times[100] + 1e-13, 41 - 1e-14, 1e-15):
        d = dirichlet_kernel(t0, spec41)
        assert d.bandlimited
        assert d.values.max() == pytest.approx(1.0, abs=1e-9)


# -- spectral derivative ------------------------------------------------------

@pytest.mark.parametrize("m", [1, 5, 20])
def test_derivative_of_cosine(spec41, m):
    w = 2 * np.pi * m / 41
    x = GridSignal(spec41, np.cos(w * spec41.times), True)
    d = spectral_derivative(x, 1)
    assert np.abs(d.values + w * np.sin(w * spec41.times)).max() <= 1e-10


def test_derivative_order_zero_and_linearity(spec41):
    x, y = random_bandlimited(spec41, seed=1), random_bandlimited(spec41, seed=2)
    assert np.array_equal(spectral_derivative(x, 0).values, x.values)
    lhs = spectral_derivative(2 * x + y, 2).values
    rhs = 2 * spectral_derivative(x, 2).values + spectral_derivative(y, 2).values
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_derivative_matches_finite_difference():
    spec = GridSpec(41, 64)
    x = random_bandlimited(spec, seed=4)
    d = spectral_derivative(x, 1).values
    h = spec.dt
    v = x.values
    # fourth-order central stencil; the second-order one alone is ~4e-4 off at the top harmonic
    fd = (-np.roll(v, -2) + 8 * np.roll(v, -1) - 8 * np.roll(v, 1) + np.roll(v, 2)) / (12 * h)
    assert np.linalg.norm(fd - d) / np.linalg.norm(d) <= 1e-4


def test_derivative_requires_bandlimited(spec41):
    with pytest.raises(PreconditionError):
        spectral_derivative(white(spec41, 0), 1)


def test_evaluate_matches_independent_sum(spec41):
    x = random_bandlimited(spec41, seed=9)
    t = np.random.default_rng(0).uniform(0, 41, 20)
    for order in (0, 1, 2):
        assert np.allclose(evaluate(x, t, order), fourier_eval(x.values, spec41, t, order),
                           atol=1e-10)


# -- random signals -----------------------------------------------------------

def test_random_bandlimited_deterministic_and_unit_norm(spec41):
    a = random_bandlimited(spec41, "linear", seed=5)
    b = random_bandlimited(spec41, "linear", seed=5)
    assert np.array_equal(a.values, b.values)
    assert norm(a) == pytest.approx(1.0, rel=1e-13)
    assert a.values.mean() == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ConfigError):
        random_bandlimited(spec41, "pink", seed=0)


def test_flat_profile_energy_uniform():
    spec = GridSpec(41, 8)
    rng = np.random.default_rng(0)
    energy = np.zeros(spec.n_harmonics)
    for _ in range(10_000):
        x = random_bandlimited(spec, "flat", rng)
        energy += np.abs(np.fft.rfft(x.values)[1: spec.n_harmonics + 1]) ** 2
    rel = energy / energy.mean()
    assert np.abs(rel - 1).max() <= 0.05


def test_linear_profile_energy_grows_quadratically():
    spec = GridSpec(41, 8)
    rng = np.random.default_rng(1)
    energy = np.zeros(spec.n_harmonics)
    for _ in range(4000):
        x = random_bandlimited(spec, "linear", rng)
        energy += np.abs(np.fft.rfft(x.values)[1: spec.n_harmonics + 1]) ** 2
    m = np.arange(1, spec.n_harmonics + 1)
    ratio = energy / m ** 2
    assert np.abs(ratio / ratio.mean() - 1).max() <= 0.1


# -- subspaces ----------------------------------------------------------------

def test_signal_space_basis_orthonormal():
    spec = GridSpec(11, 16)
    a = np.array([[1.0, 0.0], [0.5, np.sqrt(3) / 2], [-0.5, np.sqrt(3) / 2]])
    P = a @ np.linalg.pinv(a)
    space = SignalSpace(spec, P)
    B = space.basis.reshape(space.basis.shape[0], -1)
    assert B.shape[0] == 22
    assert np.allclose(spec.dt * B @ B.T, np.eye(22), atol=1e-12)
    u = MultiSignal(spec, np.random.default_rng(0).standard_normal((3, spec.grid_len)))
    pu = space.project(u)
    assert np.allclose(space.project(pu).values, pu.values, atol=1e-12)


def test_signal_space_rejects_non_projector(spec11):
    with pytest.raises(PreconditionError):
        SignalSpace(spec11, np.array([[1.0, 0.5], [0.0, 1.0]]))
