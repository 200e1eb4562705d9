import numpy as np
import pytest

from vqprecond import (
    CampaignConfig,
    Codebook,
    MapKind,
    Method,
    QuantizerSpec,
    T2Map,
    VQPError,
    assign_batch,
    empirical_distortion,
    frequency_profile,
    ideal_sweep,
    kmeans,
    load_balance_report,
    run_campaign,
)
from vqprecond.driver import (
    RealizationRecord,
    _reduce,
    build_codebook,
    norm_frequency_correlation,
    simulation_latents,
    training_sample,
    write_report,
)


def small_config(**kw):
    q = kw.pop("quantizer", QuantizerSpec(method="kmeans", P=8, n_s=2000, seed=3))
    base = dict(resolution=16, n_kl=40, m=4, quantizer=q, preconditioner="bj",
                n_realizations=60, master_seed=11)
    base.update(kw)
    return CampaignConfig(**base)


@pytest.fixture(scope="module")
def small_report(basis16, mesh16):
    return run_campaign(small_config(), basis=basis16, mesh=mesh16)


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(m=41).validate()
    with pytest.raises(ValueError):
        small_config(eps=1.0).validate()
    with pytest.raises(ValueError):
        small_config(n_realizations=0).validate()
    with pytest.raises(ValueError):
        small_config(preconditioner="ilu").validate()
    with pytest.raises(ValueError):
        CampaignConfig.from_dict({"resolution": 8, "colour": "red"})


def test_config_dict_round_trip():
    cfg = small_config()
    again = CampaignConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert isinstance(again.quantizer, QuantizerSpec)


def test_conservation(small_report):
    rep = small_report
    J = [r.iterations for r in rep.records if r.converged]
    assert rep.n_p.sum() == rep.n_realizations == 60
    assert rep.sum_J.sum() == sum(J) == rep.total_iterations
    assert rep.mean_iterations == pytest.approx(rep.sum_J.sum() / rep.n_realizations, rel=1e-12)
    for p in np.flatnonzero(rep.n_p):
        assert rep.mean_J[p] == pytest.approx(rep.sum_J[p] / rep.n_p[p], rel=1e-12)
    assert [r.index for r in rep.records] == list(range(60))


def test_assignment_consistency(small_report, basis16):
    cfg = small_report.config
    cb = build_codebook(cfg.quantizer, basis16, cfg.m)
    labels = assign_batch(cb, simulation_latents(cfg)[:, :cfg.m])
    assert labels.tolist() == [r.p for r in small_report.records]
    for r in small_report.records:
        assert r.converged and r.relative_residual < cfg.eps


def test_worker_count_does_not_change_outputs(small_report, basis16, mesh16, tmp_path):
    rep4 = run_campaign(small_config(), workers=4, basis=basis16, mesh=mesh16)
    assert rep4.summary() == small_report.summary()
    write_report(small_report, tmp_path / "w1")
    write_report(rep4, tmp_path / "w4")
    for name in ("summary.json", "per_centroid.csv", "realizations.csv"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w4" / name).read_bytes()


def test_exact_centroid_gives_one_iteration(basis16, mesh16):
    cfg = small_config(preconditioner="cholesky", n_realizations=10)
    cb = Codebook(np.zeros((1, cfg.m)), T2Map.from_basis(MapKind.SCALE, basis16, cfg.m), Method.KMEANS)
    rep = run_campaign(cfg, basis=basis16, mesh=mesh16, codebook=cb, latents=np.zeros((10, cfg.n_kl)))
    assert [r.iterations for r in rep.records] == [1] * 10
    assert rep.centroid_norm.tolist() == [0.0]


def test_mesh_mismatch(basis16):
    with pytest.raises(ValueError):
        run_campaign(small_config(resolution=8), basis=basis16)


def test_missing_artifacts():
    with pytest.raises(VQPError) as e:
        run_campaign(small_config(basis_path="/nonexistent/basis.klb"))
    assert e.value.code == "artifact-not-found"


def test_ideal_sweep(basis16, mesh16):
    cfg = small_config(preconditioner="cholesky", n_realizations=8)
    rows = ideal_sweep(cfg, [0, 4, 16, 40], basis=basis16, mesh=mesh16)
    assert [r[0] for r in rows] == [0, 4, 16, 40]
    energies = [r[1] for r in rows]
    means = [r[2] for r in rows]
    assert energies[0] == 0.0 and np.all(np.diff(energies) > 0)
    assert means[-1] == 1.0
    assert np.all(np.diff(means) <= 0)
    with pytest.raises(VQPError):
        ideal_sweep(cfg, [41], basis=basis16, mesh=mesh16)


def test_ideal_sweep_worker_independent(basis16, mesh16):
    cfg = small_config(preconditioner="amg", n_realizations=6)
    assert ideal_sweep(cfg, [0, 8], basis=basis16, mesh=mesh16) == \
        ideal_sweep(cfg, [0, 8], workers=3, basis=basis16, mesh=mesh16)


def test_load_balance_rows(small_report):
    rows, stats = load_balance_report(small_report)
    assert len(rows) == small_report.P
    assert sum(r[4] for r in rows) == small_report.total_iterations
    assert sum(r[2] for r in rows) == small_report.n_realizations
    assert stats["range"] == small_report.sum_J.max() - small_report.sum_J.min()


def test_uniform_records_have_zero_spread():
    recs = [RealizationRecord(i, i % 4, 7, True, 1e-7) for i in range(20)]
    rep = _reduce(recs, 4, np.ones(4))
    _, stats = load_balance_report(rep)
    assert stats == {"range": 0.0, "cv": 0.0}
    assert rep.n_p.tolist() == [5] * 4


def test_unconverged_excluded_from_mean():
    recs = [RealizationRecord(0, 0, 10, True, 1e-7), RealizationRecord(1, 0, 500, False, 1e-2),
            RealizationRecord(2, 1, 4, True, 1e-7)]
    rep = _reduce(recs, 2, np.zeros(2))
    assert rep.n_unconverged == 1
    assert rep.n_p.tolist() == [2, 1]
    assert rep.sum_J.tolist() == [10, 4]
    assert rep.mean_iterations == 7.0
    assert rep.mean_J.tolist() == [10.0, 4.0]


def test_frequency_profile_grid(basis16):
    cb = build_codebook(QuantizerSpec(method="grid", map="cdf"), basis16, 1)
    prof = frequency_profile(cb, 100_000, seed=2)
    assert prof[0][0] == 0 and {prof[1][0], prof[2][0]} == {1, 2}
    norms = [n for _, n, _ in prof]
    assert norms == sorted(norms)
    freqs = np.array([f for _, _, f in prof])
    assert freqs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.abs(freqs - 1 / 3) < 3 * np.sqrt(2 / 9 / 1e5))


def test_scale_map_frequencies_fall_with_norm(basis16):
    cb = build_codebook(QuantizerSpec(method="kmeans", P=30, n_s=10_000, map="scale"), basis16, 2)
    assert norm_frequency_correlation(frequency_profile(cb, 20_000, seed=0)) < 0


def test_distortion_decreases_with_rate(basis16):
    sample = training_sample(20_000, 2, seed=5)
    t2 = T2Map.from_basis(MapKind.SCALE, basis16, 2)
    w10 = empirical_distortion(kmeans(sample, t2, 10), sample).total
    w100 = empirical_distortion(kmeans(sample, t2, 100), sample).total
    assert w100 <= w10


def test_streams_are_independent():
    cfg = small_config()
    sim = simulation_latents(cfg)
    train = training_sample(cfg.n_realizations, cfg.n_kl, cfg.master_seed)
    assert not np.allclose(sim, train)


@pytest.mark.slow
def test_scale_map_spreads_cell_mass_more(basis32):
    # same comparison as the map-choice acceptance check, with enough assignments
    # that the cell masses rather than sampling noise decide the outcome
    P, n_assign = 50, 200_000
    sample = training_sample(20_000, 8, 1)
    cv = {}
    for kind in ("scale", "cdf"):
        cb = build_codebook(QuantizerSpec(method="kmeans", P=P, map=kind, seed=1), basis32, 8, sample)
        f = np.array([row[2] for row in frequency_profile(cb, n_assign, seed=0)])
        cv[kind] = f.std() / f.mean()
    assert cv["scale"] > cv["cdf"]
