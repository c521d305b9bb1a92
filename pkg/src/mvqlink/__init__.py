"""Multi-codebook vector quantization over noisy digital links.

The package covers the full inference-time pipeline: product vector
quantization against a bank of channel-matched codebooks, a parallel
binary-symmetric-channel transfer model with a Gray-QAM modem, expected
end-to-end distortion bookkeeping, joint codebook/modulation/power
allocation, channel-optimized codebook training, and a Monte Carlo link
simulator with a command-line front end.
"""

from .allocator import (
    LinkBudget,
    LookupTable,
    SymbolSlot,
    TransmissionPlan,
    build_lut,
    codebook_selection_baseline,
    jcamp,
    jcap,
    load_lut,
    lut_plan,
    post_process,
    save_lut,
    temp_power,
)
from .channel import (
    ChannelState,
    GumbelConfig,
    ber_approx,
    ber_inverse,
    bsc_sample,
    bsc_transition_prob,
    draw_channel,
    gumbel_soft_reconstruct,
    qam_detect,
    qam_modulate,
)
from .dataset import SynthSpec, ingest_dataset, read_dataset, synthesize, write_dataset
from .distortion import (
    DistortionTable,
    build_table,
    distortion_grad_mu,
    expected_distortion,
    load_table,
    save_table,
)
from .simulate import (
    SweepConfig,
    SweepReport,
    compression_ratio,
    psnr,
    run_once,
    save_report,
    snr_db,
    sweep,
    verify_ber,
)
from .training import (
    MultiCodebookVectorQuantizer,
    TrainConfig,
    lloyd_step,
    make_synthetic_bank,
    refine_profile,
    regularizer,
    train_sequential,
)
from .vq import (
    BitFlipProfile,
    Codebook,
    CodebookBank,
    bits_to_index,
    index_to_bits,
    load_bank,
    quantize,
    reconstruct,
    save_bank,
    split,
)

__version__ = "0.1.0"

__all__ = [
    "BitFlipProfile",
    "ChannelState",
    "Codebook",
    "CodebookBank",
    "DistortionTable",
    "GumbelConfig",
    "LinkBudget",
    "LookupTable",
    "MultiCodebookVectorQuantizer",
    "SweepConfig",
    "SweepReport",
    "SymbolSlot",
    "SynthSpec",
    "TrainConfig",
    "TransmissionPlan",
    "ber_approx",
    "ber_inverse",
    "bits_to_index",
    "bsc_sample",
    "bsc_transition_prob",
    "build_lut",
    "build_table",
    "codebook_selection_baseline",
    "compression_ratio",
    "distortion_grad_mu",
    "draw_channel",
    "expected_distortion",
    "gumbel_soft_reconstruct",
    "index_to_bits",
    "ingest_dataset",
    "jcamp",
    "jcap",
    "lloyd_step",
    "load_bank",
    "load_lut",
    "load_table",
    "lut_plan",
    "make_synthetic_bank",
    "post_process",
    "psnr",
    "qam_detect",
    "qam_modulate",
    "quantize",
    "read_dataset",
    "reconstruct",
    "refine_profile",
    "regularizer",
    "run_once",
    "save_bank",
    "save_lut",
    "save_report",
    "save_table",
    "snr_db",
    "split",
    "sweep",
    "synthesize",
    "temp_power",
    "train_sequential",
    "verify_ber",
    "write_dataset",
]
