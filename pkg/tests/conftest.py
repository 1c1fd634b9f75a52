"""Shared fixtures.

The desk-scale experiment (200 speakers, both training modes, full EER
sweep) and the 100k-row store are expensive, so they are built once per
session and shared by the store, evaluation, and acceptance tests.
"""

import time

import numpy as np
import pytest

from mvec import (
    ExperimentConfig,
    VectorStore,
    build_trials,
    dimension_sweep,
    encode_batch,
    generate,
    rng_for,
    train,
)


@pytest.fixture(scope="session")
def desk_config():
    """The frozen desk-scale experiment settings (the config defaults)."""
    return ExperimentConfig()


@pytest.fixture(scope="session")
def desk_experiment(desk_config):
    """Full pipeline at desk scale: corpus, trials, both systems, EER table.

    Returns a dict with the corpus, trials, per-system trained models,
    eval-split embedding maps, the per-(system, dim) EER lookup, and the
    wall-clock seconds the whole pipeline took ("build_seconds").
    """
    cfg = desk_config
    started = time.perf_counter()
    corpus = generate(
        num_speakers=cfg.num_speakers,
        utts_per_speaker=cfg.utts_per_speaker,
        frames_per_utt=cfg.frames_per_utt,
        feat_dim=cfg.feat_dim,
        intra_spread=cfg.intra_spread,
        channel_spread=cfg.channel_spread,
        seed=cfg.seed,
        eval_per_speaker=cfg.eval_per_speaker,
    )
    trials = build_trials(corpus, cfg.targets_per_speaker,
                          cfg.nontargets_per_speaker, cfg.seed)
    eval_ids = corpus.utt_ids("eval")
    eval_feats = [corpus.features[i] for i in eval_ids]

    result = {"corpus": corpus, "trials": trials, "config": cfg}
    systems = {}
    for mode in ("baseline", "mrl"):
        params, heads, history = train(corpus, cfg.train_config(), mode=mode)
        embeddings = encode_batch(params, eval_feats)
        systems[mode] = {int(i): embeddings[r] for r, i in enumerate(eval_ids)}
        result[mode] = {"params": params, "heads": heads, "history": history}
    result["systems"] = systems

    report = dimension_sweep(systems, trials, cfg.dims)
    result["report"] = report
    result["eer"] = {(sys, dim): eer for sys, dim, eer, _ in report.rows}
    result["build_seconds"] = time.perf_counter() - started
    return result


@pytest.fixture(scope="session")
def big_store(desk_experiment):
    """100k nested-prefix embeddings in a store, for recall and latency tests.

    Rows are produced by the trained MRL extractor on fresh synthetic
    utterances — ten per speaker, so every query speaker has genuine
    neighbors to retrieve — and prefix dimensions carry real structure
    (random isotropic vectors would not exercise coarse-to-fine search).
    """
    cfg = desk_experiment["config"]
    params = desk_experiment["mrl"]["params"]
    num_speakers, utts_each = 10_000, 10
    n = num_speakers * utts_each
    rng = rng_for(901, "data")
    # Same generative family as the corpus (speaker mean + per-utterance
    # channel offset + frame noise) but fresh speakers; 5 frames keeps
    # encoding fast.
    means = rng.standard_normal((num_speakers, cfg.feat_dim))
    offsets = cfg.channel_spread * rng.standard_normal(
        (num_speakers, utts_each, cfg.feat_dim))
    frames = (means[:, None, None, :] + offsets[:, :, None, :]
              + cfg.intra_spread * rng.standard_normal(
                  (num_speakers, utts_each, 5, cfg.feat_dim)))
    frames = frames.reshape(n, 5, cfg.feat_dim).astype(np.float32)
    # Encode in chunks to cap the f64 frame-layer intermediate.
    embeddings = np.vstack([
        encode_batch(params, list(frames[start:start + 10_000]))
        for start in range(0, n, 10_000)
    ])
    store = VectorStore(dim=cfg.embed_dim)
    store.ingest_many(np.arange(n, dtype=np.uint64), embeddings)
    return {"store": store, "params": params, "config": cfg,
            "speaker_means": means, "utts_per_speaker": utts_each}
