"""Acceptance suite: nine numbered criteria, one printed verdict each.

Every test emits `[acceptance] criterion N: PASS|FAIL -- detail` through
capsys.disabled() so the verdict lines reach the terminal even under
pytest's output capture.  The slow end-to-end criteria share one
session-scoped synthetic corpus and one inter-only training run.
"""

import time
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import click_clip, tone_clip
from vmembed import (audio_features, cli, dsp, evaluation, losses, network,
                     training, video_pipeline)
from vmembed.losses import LossWeights, PrePostBatch, TripletSet


def verdict(capsys, num, ok, detail):
    word = "PASS" if ok else "FAIL"
    with capsys.disabled():
        print(f"\n[acceptance] criterion {num}: {word} -- {detail}",
              flush=True)
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------------------
# shared end-to-end artifacts (criteria 5, 8, 9)
# ---------------------------------------------------------------------------

def _train_config(seed, intra, epochs=30):
    lam = 1.0 if intra else 0.0
    return training.TrainConfig(
        batch_size=256, epochs=epochs, seed=seed,
        weights=LossWeights(lambda3=lam, lambda4=lam))


def _test_r10(manifest, params):
    videos, musics, _ = training.load_split_features(manifest, "test")
    emb_v, _ = network.forward(params, "video", videos, "eval")
    emb_m, _ = network.forward(params, "music", musics, "eval")
    s = emb_v @ emb_m.T
    return evaluation.recall_at_k(s, 10), evaluation.recall_at_k(s.T, 10), s


@pytest.fixture(scope="session")
def corpus3200(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_corpus")
    manifest = training.generate_synthetic_corpus(
        3200, 16, 48, 40, 0.1, 11, str(root), (2000, 200, 1000))
    return root, manifest


@pytest.fixture(scope="session")
def inter_model(corpus3200):
    _, manifest = corpus3200
    t0 = time.monotonic()
    result = training.train(_train_config(0, intra=False), manifest)
    elapsed = time.monotonic() - t0
    assert not result.aborted
    r_vm, r_mv, s = _test_r10(manifest, result.params)
    return SimpleNamespace(result=result, elapsed=elapsed,
                           r_vm=r_vm, r_mv=r_mv, s=s)


# ---------------------------------------------------------------------------
# 1. random-baseline reproduction
# ---------------------------------------------------------------------------

def test_criterion_1_random_baseline(capsys):
    t0 = time.monotonic()
    n, d, reps = 1000, 64, 20
    bands = {1: (0.05, 0.15), 10: (0.5, 1.5), 25: (1.25, 3.75)}
    sums = dict.fromkeys(bands, 0.0)
    for rep in range(reps):
        rng = np.random.default_rng((20, rep))
        v = rng.standard_normal((n, d))
        m = rng.standard_normal((n, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        m /= np.linalg.norm(m, axis=1, keepdims=True)
        s = v @ m.T
        for k in bands:
            sums[k] += (evaluation.recall_at_k(s, k)
                        + evaluation.recall_at_k(s.T, k)) / 2.0
    means = {k: total / reps for k, total in sums.items()}
    elapsed = time.monotonic() - t0
    in_band = all(lo <= means[k] <= hi for k, (lo, hi) in bands.items())
    verdict(capsys, 1, in_band and elapsed < 10.0,
            "mean R@1={:.3f} (band 0.05..0.15), R@10={:.3f} (0.5..1.5), "
            "R@25={:.3f} (1.25..3.75), {:.1f}s < 10s".format(
                means[1], means[10], means[25], elapsed))


# ---------------------------------------------------------------------------
# 2. gradient correctness on the full objective
# ---------------------------------------------------------------------------

_H = 1e-5
_REL_TOL = 1e-4


def _random_tiny_net(rng, seed):
    emb = int(rng.integers(2, 9))

    def cfg():
        hidden = [int(rng.integers(3, 17))
                  for _ in range(int(rng.integers(0, 3)))]
        return network.BranchConfig(
            (int(rng.integers(4, 17)), *hidden, emb),
            dropout_keep=1.0,
            use_batch_norm_final=bool(rng.integers(0, 2)))

    params = network.init_params(cfg(), cfg(), seed)
    for name, tensor in params.tensors.items():
        if ".b" in name:  # move biases off the symmetric zero init
            tensor += 0.05 * rng.standard_normal(tensor.shape)
    return params


def _kink_margins(params, xv, xm, weights, seed):
    """Smallest distance to any ReLU / hinge / sign kink; FD is only
    trusted when these clear the step size by a wide margin."""
    ev, cv = network.forward(params, "video", xv, "train")
    em, cm = network.forward(params, "music", xm, "train")
    z_margin = min((np.abs(z).min() for c in (cv, cm) for z in c.zs),
                   default=np.inf)
    s = ev @ em.T
    hinge = np.inf
    for x in (s, s.T):
        sc = x - np.diag(x)[:, None] + weights.margin_e
        off = ~np.eye(x.shape[0], dtype=bool)
        hinge = min(hinge, np.abs(sc[off]).min())
    gap = np.inf
    n = xv.shape[0]
    for emb, tag in ((ev, 0), (em, 1)):
        tr = losses.sample_triplets(n, 10 * n, seed, tag)
        i, j, k = tr[:, 0], tr[:, 1], tr[:, 2]
        gaps = np.sum(emb[i] * emb[k], axis=1) - np.sum(emb[i] * emb[j], axis=1)
        gap = min(gap, np.abs(gaps).min())
    return z_margin, hinge, gap


def test_criterion_2_gradient_correctness(capsys):
    t0 = time.monotonic()
    weights = LossWeights(top_q=1000)  # covers every violation at n=8
    accepted, attempt, max_err = 0, 0, 0.0
    while accepted < 10:
        attempt += 1
        assert attempt < 200, "could not find 10 kink-free configurations"
        seed = 7000 + attempt
        rng = np.random.default_rng(seed)
        params = _random_tiny_net(rng, seed)
        nb = 8
        xv = rng.standard_normal((nb, params.video_cfg.layer_dims[0]))
        xm = rng.standard_normal((nb, params.music_cfg.layer_dims[0]))
        z_m, hinge_m, gap_m = _kink_margins(params, xv, xm, weights, seed)
        if z_m < 1e-4 or hinge_m < 5e-4 or gap_m < 5e-4:
            continue  # too close to a kink for central differences

        def loss_of(p):
            ev, cv = network.forward(p, "video", xv, "train")
            em, cm = network.forward(p, "music", xm, "train")
            batch = PrePostBatch(ev, em, xv, xm)
            loss, dv, dm, _ = losses.total_loss(batch, weights, seed)
            return loss, dv, dm, cv, cm

        _, dv, dm, cv, cm = loss_of(params)
        grads = {**network.backward(cv, params, dv),
                 **network.backward(cm, params, dm)}
        for name, grad in grads.items():
            branch = name.split(".")[0]
            cfg = params.config(branch)
            if (cfg.use_batch_norm_final
                    and name == f"{branch}.b{cfg.n_layers - 1}"):
                # BN absorbs the final bias: its true gradient is 0 and
                # finite differences only see curvature noise there
                assert np.all(np.abs(grad) < 1e-8)
                continue
            tensor = params.tensors[name]
            for idx in np.ndindex(tensor.shape):
                orig = tensor[idx]
                tensor[idx] = orig + _H
                hi = loss_of(params)[0]
                tensor[idx] = orig - _H
                lo = loss_of(params)[0]
                tensor[idx] = orig
                fd = (hi - lo) / (2 * _H)
                a = grad[idx]
                err = abs(a - fd) / max(abs(a), abs(fd), 1e-3)
                max_err = max(max_err, err)
                assert err <= _REL_TOL, (
                    f"net {accepted} {name}{idx}: analytic {a:.6g} "
                    f"vs FD {fd:.6g} (rel {err:.2e})")
        accepted += 1
    elapsed = time.monotonic() - t0
    verdict(capsys, 2, max_err <= _REL_TOL and elapsed < 60.0,
            f"10 nets, max rel err {max_err:.2e} <= 1e-4 "
            f"({attempt - 10} kink-adjacent configs resampled), "
            f"{elapsed:.1f}s < 60s")


# ---------------------------------------------------------------------------
# 3. mining oracle
# ---------------------------------------------------------------------------

def _brute_force_mine(x, e, q):
    n = x.shape[0]
    items = []
    for i in range(n):
        for j in range(n):
            score = x[i, j] - x[i, i] + e
            if i != j and score > 0:
                items.append((-score, i, j))
    items.sort()
    return [(i, j) for _, i, j in items[:q]]


def test_criterion_3_mining_oracle(capsys):
    t0 = time.monotonic()
    rng = np.random.default_rng(33)
    compared = 0
    for b in range(200):
        n = int(rng.integers(2, 65))
        s = rng.standard_normal((n, n))
        if b % 3 == 0:
            s = np.round(s, 1)  # mass ties exercise the (i, j) ordering
        e = float(rng.uniform(0.0, 0.5))
        for q in (1, 5, 20, 1000):
            for direction, mat in (("video_anchor", s), ("music_anchor", s.T)):
                got = losses.mine_top_q_violations(s, e, q, direction)
                assert got == _brute_force_mine(mat, e, q)
                compared += 1
    elapsed = time.monotonic() - t0
    verdict(capsys, 3, compared == 1600 and elapsed < 10.0,
            f"{compared} mined lists exactly match brute force "
            f"(200 batches x 4 Q x 2 directions), {elapsed:.1f}s < 10s")


# ---------------------------------------------------------------------------
# 4. intra-loss semantics
# ---------------------------------------------------------------------------

def test_criterion_4_intra_semantics(capsys):
    rng = np.random.default_rng(44)
    n, d = 40, 12
    pre = rng.standard_normal((n, d))
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    emb = pre @ q
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    triples = losses.sample_triplets(n, 1000, 7, 0)
    tset = TripletSet(intra_v=triples, intra_m=triples)
    batch = PrePostBatch(emb, emb, pre, pre)
    ortho_loss, _, _ = losses.soft_intra_loss(batch, tset, LossWeights())
    ortho_zero = abs(ortho_loss) < 1e-9

    # independent random embedding: every summand must be non-negative
    emb_r = rng.standard_normal((n, 8))
    emb_r /= np.linalg.norm(emb_r, axis=1, keepdims=True)
    pre_r = rng.standard_normal((n, d))
    summands = []
    for i, j, k in triples:
        c = losses.structure_coefficient(emb_r[i], emb_r[j], emb_r[k],
                                         pre_r[i], pre_r[j], pre_r[k])
        s_ij = float(emb_r[i] @ emb_r[j])
        s_ik = float(emb_r[i] @ emb_r[k])
        summands.append(c * (s_ij - s_ik))
    all_nonneg = min(summands) >= 0.0

    batch_r = PrePostBatch(emb_r, emb_r, pre_r, pre_r)
    corr, dv_c, dm_c = losses.soft_intra_loss(batch_r, tset, LossWeights())
    lit, dv_l, dm_l = losses.soft_intra_loss(
        batch_r, tset, LossWeights(intra_mode="literal"))
    negated = (lit == -corr and np.array_equal(dv_l, -dv_c)
               and np.array_equal(dm_l, -dm_c))
    verdict(capsys, 4, ortho_zero and all_nonneg and negated,
            f"orthogonal-transform loss {ortho_loss:.2e} < 1e-9, "
            f"min summand {min(summands):.3g} >= 0 over 1000 triples, "
            f"literal == -corrected: {negated}")


# ---------------------------------------------------------------------------
# 5. end-to-end learning on the synthetic corpus
# ---------------------------------------------------------------------------

def test_criterion_5_end_to_end_learning(capsys, corpus3200, inter_model):
    _, manifest = corpus3200
    inter_ok = (inter_model.r_vm >= 5.0 and inter_model.r_mv >= 5.0
                and inter_model.elapsed < 600.0)

    inter_r10, intra_r10 = [], []
    for seed in range(5):
        for intra, bucket in ((False, inter_r10), (True, intra_r10)):
            if not intra and seed == 0:
                bucket.append((inter_model.r_vm + inter_model.r_mv) / 2.0)
                continue
            result = training.train(_train_config(seed, intra), manifest)
            assert not result.aborted
            r_vm, r_mv, _ = _test_r10(manifest, result.params)
            bucket.append((r_vm + r_mv) / 2.0)
    med_inter = float(np.median(inter_r10))
    med_intra = float(np.median(intra_r10))
    ordering_ok = med_intra >= med_inter - 1.0
    verdict(capsys, 5, inter_ok and ordering_ok,
            "inter-only test R@10 v->m {:.1f} / m->v {:.1f} (>= 5.0) in "
            "{:.0f}s < 600s; 5-seed medians intra {:.1f} >= inter {:.1f} "
            "- 1.0".format(inter_model.r_vm, inter_model.r_mv,
                           inter_model.elapsed, med_intra, med_inter))


# ---------------------------------------------------------------------------
# 6. DSP golden values
# ---------------------------------------------------------------------------

def test_criterion_6_dsp_golden_values(capsys):
    tone = tone_clip(440.0, seconds=3.0, rate=12000, amp=1.0)
    spec = dsp.magnitude(dsp.stft(tone))

    summaries = audio_features.spectral_summaries(spec)
    centroid = float(summaries.segment("centroid").mean())
    centroid_ok = abs(centroid - 440.0) <= 0.01 * 440.0

    chroma = audio_features.chroma_stft(spec)
    pitch_class = int(np.argmax(chroma.rows.mean(axis=0)))
    chroma_ok = pitch_class == 9  # A

    rms = float(audio_features.rms_energy(tone).rows.mean())
    rms_ok = abs(rms - 1.0 / np.sqrt(2.0)) <= 1e-2

    square = dsp.AudioClip(np.tile(
        np.concatenate([np.ones(32), -np.ones(32)]), 36000 // 64), 12000)
    zcr = audio_features.zero_crossing_rate(square).rows
    # 512-sample frames hold 16 aligned half-period blocks -> 15 changes
    zcr_ok = bool(np.all(zcr == 15 / 512))

    rng = np.random.default_rng(6)
    x = rng.standard_normal(256)
    st = dsp.stft(dsp.AudioClip(x, 8000), n_fft=64, hop=32)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(64) / 64)
    dft = np.exp(-2j * np.pi * np.arange(33)[:, None]
                 * np.arange(64)[None, :] / 64)
    dft_err = max(
        float(np.max(np.abs(st.values[t] - dft @ (x[t * 32:t * 32 + 64] * w))))
        for t in range(st.frames))
    dft_ok = dft_err < 1e-9 * float(np.max(np.abs(st.values)))

    h, p = dsp.hpss(spec)
    tone_frac = np.sum(h.mags ** 2) / (np.sum(h.mags ** 2)
                                       + np.sum(p.mags ** 2))
    ch, cp = dsp.hpss(dsp.magnitude(dsp.stft(click_clip())))
    click_frac = np.sum(cp.mags ** 2) / (np.sum(ch.mags ** 2)
                                         + np.sum(cp.mags ** 2))
    hpss_ok = tone_frac >= 0.90 and click_frac >= 0.90

    ok = all((centroid_ok, chroma_ok, rms_ok, zcr_ok, dft_ok, hpss_ok))
    verdict(capsys, 6, ok,
            "centroid {:.2f} Hz (within 1% of 440), chroma argmax {} (A=9), "
            "rms {:.4f} (1/sqrt2 +- 1e-2), square ZCR exact: {}, "
            "STFT-vs-DFT rel err < 1e-9: {}, HPSS tone {:.3f} / "
            "click {:.3f} >= 0.90".format(centroid, pitch_class, rms, zcr_ok,
                                          dft_ok, tone_frac, click_frac))


# ---------------------------------------------------------------------------
# 7. whitening / PCA / CCA invariants
# ---------------------------------------------------------------------------

def test_criterion_7_whitening_invariants(capsys):
    rng = np.random.default_rng(77)
    data = rng.standard_normal((400, 20)) @ rng.standard_normal((20, 20))
    wpca = video_pipeline.fit_wpca(data, 12)
    transformed = video_pipeline.apply_wpca(wpca, data).rows
    cov = np.cov(transformed, rowvar=False, ddof=1)
    wpca_err = (np.linalg.norm(cov - np.eye(12))
                / np.linalg.norm(np.eye(12)))
    wpca_ok = wpca_err <= 1e-4

    pca = video_pipeline.fit_pca(data, 8)
    gram = pca.projection.T @ pca.projection
    pca_err = float(np.max(np.abs(gram - np.eye(8))))
    pca_ok = pca_err <= 1e-6

    n, latent = 2000, 4
    z = rng.standard_normal((n, latent))
    x = z @ rng.standard_normal((latent, 8)) + 0.05 * rng.standard_normal((n, 8))
    y = z @ rng.standard_normal((latent, 9)) + 0.05 * rng.standard_normal((n, 9))
    planted = evaluation.fit_cca(x, y, latent)
    planted_min = float(planted.correlations.min())
    null = evaluation.fit_cca(rng.standard_normal((n, 8)),
                              rng.standard_normal((n, 9)), latent)
    null_max = float(null.correlations.max())
    cca_ok = planted_min > 0.95 and null_max < 0.15

    verdict(capsys, 7, wpca_ok and pca_ok and cca_ok,
            f"WPCA cov rel Frobenius {wpca_err:.2e} <= 1e-4, PCA "
            f"orthonormality dev {pca_err:.2e} <= 1e-6, CCA planted min "
            f"corr {planted_min:.3f} > 0.95, null max {null_max:.3f} < 0.15")


# ---------------------------------------------------------------------------
# 8. bitwise training determinism
# ---------------------------------------------------------------------------

def test_criterion_8_determinism(capsys, corpus3200, tmp_path):
    root, _ = corpus3200
    outs = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = cli.entry(["train", "--manifest", str(root / "manifest.jsonl"),
                          "--epochs", "3", "--seed", "7", "--out", str(out)])
        assert code == cli.EXIT_OK
        outs.append(out)
    a, b = outs
    trace_same = (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    ckpt_same = ((a / "checkpoint.vmck").read_bytes()
                 == (b / "checkpoint.vmck").read_bytes())
    verdict(capsys, 8, trace_same and ckpt_same,
            f"two cmd_train --seed 7 runs: trace byte-identical {trace_same}, "
            f"checkpoint byte-identical {ckpt_same}")


# ---------------------------------------------------------------------------
# 9. machine-preference sanity
# ---------------------------------------------------------------------------

def test_criterion_9_machine_preference(capsys, inter_model):
    gr = evaluation.machine_preference_gr(inter_model.s, 10000, seed=9)
    verdict(capsys, 9, gr > 65.0,
            f"machine preference GR {gr:.2f}% > 65% over 10000 trials")
