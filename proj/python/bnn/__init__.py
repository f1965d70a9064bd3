"""Binarized neural network engine.

Thin python layer over the C++ core: bit-packed XNOR-popcount linear algebra,
straight-through-estimator training, shift-based batch normalization and
AdaMax, plus the energy and filter-repetition analysis tools.
"""

from bnn._core import (  # noqa: F401
    GIT_DESCRIBE,
    BitMatrix,
    BnnError,
    Dataset,
    EpochMetrics,
    FilterStats,
    GemmReport,
    InferenceModel,
    Network,
    TrainResult,
    __version__,
    ap2,
    bench_gemm,
    clip_weights,
    default_data_dir,
    energy_estimate,
    export_inference,
    fixed_point_first_layer,
    glorot_scale,
    hard_sigmoid,
    hard_tanh,
    hinge_loss,
    infer,
    infer_predict,
    load_mnist,
    load_model,
    make_dataset,
    make_synthetic,
    pack,
    real_gemm,
    save_model,
    schedule_lr,
    sign_binarize,
    ste_backward,
    stochastic_binarize,
    train,
    unique_filters,
    unpack,
    xnor_gemm,
    xnor_gemm_pm1,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
