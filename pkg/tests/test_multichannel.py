import numpy as np
import pytest
from hypothesis import given, strategies as st

from pocsrecon.errors import DimensionError, PreconditionError
from pocsrecon.multichannel import (
    ChannelSpikeSet, MixingMatrix, encode_channels, mc_gram, mc_gram_entry, mc_kernels,
    project_A_multichannel, read_matrix, read_spike_set, synthesize_output, tight_frame,
    write_matrix, write_spike_set,
)
from pocsrecon.ortho import SamplingOperator, apply_S_star, gram, run_discrete
from pocsrecon.samplers import SpikeTrain, sample
from pocsrecon.signal_space import (
    GridSpec, MultiSignal, bandlimited_space, inner_product, norm, random_bandlimited,
)

SPEC = GridSpec(11, 16)
MB = tight_frame(3, 2)
seeds = st.integers(0, 2**32 - 1)


def sources(rng, N=2):
    return MultiSignal.from_channels([random_bandlimited(SPEC, seed=rng) for _ in range(N)])


def encoded(seed, per_channel=12, mix=MB):
    rng = np.random.default_rng(seed)
    y = sources(rng, mix.shape[1])
    x = mix.mix(y)
    bias = 2 * np.abs(x.values).max()
    # a zero-mean channel integrates to bias * T over one period
    spikes = encode_channels(x, bias, bias * 11 / (per_channel - 0.5))
    fam = mc_kernels(spikes, SPEC)
    return y, x, spikes, fam, rng


# -- mixing -------------------------------------------------------------------

def test_mercedes_benz_frame():
    A = MB.A
    assert np.allclose(A.T @ A, 1.5 * np.eye(2), atol=1e-14)
    assert np.allclose(np.linalg.norm(A, axis=1), 1.0)
    assert np.allclose(A.sum(axis=0), 0.0, atol=1e-14)
    assert np.allclose(MB.A_pinv, A.T / 1.5, atol=1e-14)


@pytest.mark.parametrize("M,N", [(3, 2), (5, 2), (5, 3), (6, 4), (4, 4)])
def test_tight_frames(M, N):
    A = tight_frame(M, N).A
    assert A.shape == (M, N)
    assert np.allclose(A.T @ A, (M / N) * np.eye(N), atol=1e-13)
    P = tight_frame(M, N).P
    ev = np.sort(np.linalg.eigvalsh(P))
    assert np.allclose(ev, [0.0] * (M - N) + [1.0] * N, atol=1e-12)


def test_square_frame_is_identity():
    assert np.array_equal(tight_frame(3, 3).A, np.eye(3))
    assert np.allclose(tight_frame(3, 3).P, np.eye(3))


def test_frame_rotation_leaves_projector_unchanged():
    assert np.allclose(tight_frame(3, 2, rotation=0.7).P, MB.P, atol=1e-14)


def test_mixing_validation():
    with pytest.raises(PreconditionError):
        MixingMatrix(np.ones((2, 3)))
    with pytest.raises(PreconditionError):
        MixingMatrix(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]))
    with pytest.raises(DimensionError):
        MB.mix(MultiSignal.zeros(SPEC, 3))


@given(seeds)
def test_projector_properties(seed):
    rng = np.random.default_rng(seed)
    y = sources(rng)
    x = MB.mix(y)
    # mixed bandlimited signals are fixed points
    assert np.allclose(project_A_multichannel(x, MB).values, x.values, atol=1e-12)
    assert np.allclose(MB.unmix(x).values, y.values, atol=1e-12)
    # the complement of the frame range is annihilated
    null = np.linalg.svd(MB.A.T)[2][-1]
    z = MultiSignal(SPEC, np.outer(null, random_bandlimited(SPEC, seed=rng).values))
    assert np.abs(project_A_multichannel(z, MB).values).max() <= 1e-12
    # instantaneous mixing commutes with the lowpass filter
    u = MultiSignal(SPEC, rng.standard_normal((3, SPEC.grid_len)))
    a = project_A_multichannel(u, MB).values
    b = bandlimited_space(SPEC, 3).project(MultiSignal(SPEC, MB.P @ u.values)).values
    assert np.abs(a - b).max() <= 1e-12


# -- kernels and Gram ---------------------------------------------------------

def test_kernels_are_single_channel_and_orthogonal():
    y, x, spikes, fam, _ = encoded(1)
    assert fam.orthogonal and fam.scheme == "multichannel_tem"
    assert len(fam) == len(spikes)
    lengths = fam.intervals[:, 1] - fam.intervals[:, 0]
    assert np.allclose(fam.norms ** 2, lengths, rtol=1e-14)
    for k in range(len(fam)):
        other = np.delete(np.arange(3), fam.channels[k])
        assert not np.any(fam.band_kernels[k, other])
    assert list(fam.channels) == sorted(fam.channels)
    assert np.allclose(sample(x, fam).raw, spikes.samples, atol=1e-10)


def test_mc_gram_against_generic_gram():
    _, _, _, fam, _ = encoded(2)
    op = SamplingOperator(fam, MB.space(SPEC))
    for normalized in (True, False):
        generic = gram(op.with_normalization(normalized)).matrix
        fast = mc_gram(fam, MB, normalized)
        assert np.abs(fast - generic).max() <= 1e-10
    e = [[mc_gram_entry(k, j, fam, MB) for j in range(len(fam))] for k in range(len(fam))]
    assert np.allclose(e, mc_gram(fam, MB), atol=1e-14)


def test_gram_entry_properties():
    _, _, _, fam, _ = encoded(3)
    G = mc_gram(fam, MB)
    assert np.allclose(G, G.T, atol=1e-15)
    # diagonal equals p_ii times the bandlimited fraction of each kernel's energy
    own = SPEC.dt * np.einsum("kl,kl->k", fam.band_kernels[np.arange(len(fam)), fam.channels],
                              fam.band_kernels[np.arange(len(fam)), fam.channels])
    assert np.allclose(np.diag(G), MB.P[fam.channels, fam.channels] * own / fam.norms ** 2)
    assert np.all(np.diag(G) <= 2 / 3 + 1e-12)
    assert np.linalg.norm(G, 2) <= 1 + 1e-12


def test_synthesis_matches_adjoint():
    _, _, _, fam, rng = encoded(4)
    op = SamplingOperator(fam, MB.space(SPEC))
    c = rng.standard_normal(len(fam))
    x_hat, y_hat = synthesize_output(c, fam, MB)
    assert np.abs(x_hat.values - apply_S_star(op, c).values).max() <= 1e-12
    assert np.allclose(y_hat.values, MB.A_pinv @ x_hat.values, atol=1e-12)
    assert np.allclose(MB.mix(y_hat).values, x_hat.values, atol=1e-12)


def test_adjoint_inner_product():
    y, x, _, fam, rng = encoded(5)
    op = SamplingOperator(fam, MB.space(SPEC))
    c = rng.standard_normal(len(fam))
    u = MultiSignal(SPEC, rng.standard_normal((3, SPEC.grid_len)))
    lhs = float(c @ (SPEC.dt * np.einsum("kml,ml->k", fam.band_kernels,
                                         MB.space(SPEC).project(u).values) / fam.norms))
    assert lhs == pytest.approx(inner_product(u, apply_S_star(op, c)), rel=1e-11)


# -- end to end ---------------------------------------------------------------

def test_end_to_end_recovery_in_frame_space():
    y, x, spikes, fam, _ = encoded(6, per_channel=12)
    op = SamplingOperator(fam, MB.space(SPEC))
    est, tr = run_discrete(op, spikes.samples, MultiSignal.zeros(SPEC, 3), 600, truth=x)
    assert tr.is_monotone()
    assert tr.rel_mse[-1] <= 1e-10
    y_hat = MB.unmix(est)
    assert norm(y_hat - y) / norm(y) <= 1e-5


def test_bandlimited_space_plateaus_below_its_dimension():
    # 27 samples cannot pin down the 33 dimensions of three independent bandlimited
    # channels, but they do exceed the 22 dimensions of the frame range
    y, x, spikes, fam, _ = encoded(7, per_channel=9)
    opB = SamplingOperator(fam, bandlimited_space(SPEC, 3))
    _, trB = run_discrete(opB, spikes.samples, MultiSignal.zeros(SPEC, 3), 2000, truth=x,
                          measure_space=MB.space(SPEC), log_every=100)
    assert trB.rel_mse[-1] > 1e-4
    assert trB.rel_mse[-1] >= 0.99 * trB.rel_mse[-3]
    opA = SamplingOperator(fam, MB.space(SPEC))
    _, trA = run_discrete(opA, spikes.samples, MultiSignal.zeros(SPEC, 3), 2000, truth=x,
                          log_every=100)
    assert trA.rel_mse[-1] < 1e-3 * trB.rel_mse[-1]


def test_spike_set_structure():
    _, _, spikes, _, _ = encoded(8)
    assert spikes.n_channels == 3
    assert spikes.index_map[0] == (0, 0)
    assert np.allclose(spikes.per_channel_rate, [len(t) / 11 for t in spikes.trains])
    with pytest.raises(PreconditionError):
        ChannelSpikeSet((SpikeTrain([1.0], [0.0], 11), SpikeTrain([1.0], [0.0], 13)))
    with pytest.raises(DimensionError):
        mc_kernels(spikes, GridSpec(13, 16))


# -- text formats -------------------------------------------------------------

def test_matrix_and_spike_roundtrip(tmp_path):
    p = tmp_path / "A.txt"
    write_matrix(p, MB)
    assert np.array_equal(read_matrix(p), MB.A)
    assert p.read_text().splitlines()[0] == "matrix,3,2"
    _, _, spikes, _, _ = encoded(9)
    q = tmp_path / "spikes.txt"
    write_spike_set(q, spikes, SPEC)
    back, spec = read_spike_set(q)
    assert spec == SPEC
    for a, b in zip(back.trains, spikes.trains):
        assert np.array_equal(a.times, b.times) and np.array_equal(a.samples, b.samples)


def test_rotated_frames_give_matching_error_curves():
    """Mean log-MSE curves of two rotated frames agree within Monte-Carlo noise."""
    logs = {0.0: [], 0.9: []}
    for trial in range(30):
        for rot in logs:
            mix = tight_frame(3, 2, rotation=rot)
            y, x, spikes, fam, _ = encoded(1000 + trial, per_channel=10, mix=mix)
            _, tr = run_discrete(SamplingOperator(fam, mix.space(SPEC)), spikes.samples,
                                 MultiSignal.zeros(SPEC, 3), 40, truth=x, log_every=10)
            logs[rot].append(np.log10(tr.rel_mse[1:]))
    a, b = np.array(logs[0.0]), np.array(logs[0.9])
    se = np.sqrt(a.var(axis=0, ddof=1) / len(a) + b.var(axis=0, ddof=1) / len(b))
    assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) <= 4 * se)
