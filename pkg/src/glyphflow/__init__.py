"""glyphflow: controllable visual text rendering at desk scale.

A tiny rectified-flow latent diffusion model learns to draw exact text:
a glyph canvas (user text rasterized into boxes) supplies a canny edge
map and a position mask, packed into a condition latent that drives a
ControlNet-style auxiliary branch; an OCR-feature perceptual loss rewards
legible text during training; at inference the text-region latent is
initialized from the encoded glyph canvas and control residuals are
gated by a region mask so the background stays untouched.
"""

from .errors import (
    BadSteps,
    BadThresholds,
    BadTime,
    BoxOverflow,
    ConfigMismatch,
    ConvergenceFailure,
    CorruptDataset,
    DuplicateCodepoint,
    EmptyFont,
    EmptyText,
    GlyphflowError,
    IndivisibleSize,
    InvariantViolation,
    MissingGlyph,
    NonFiniteLoss,
    OutOfBounds,
    ParseError,
    PlacementFailure,
    ShapeMismatch,
)
from .fonts import (
    BUILTIN_FONTS,
    BitmapFont,
    builtin_font,
    line_width,
    load_bfont,
    parse_bfont,
    rasterize_line,
    save_bfont,
    write_bfont,
)
from .canvas import (
    Box,
    GlyphCanvas,
    PlacedLine,
    TextLineSpec,
    check_box,
    compose_canvas,
)
from .edges import canny_edges, gaussian_kernel
from .conditions import (
    ConditionPack,
    build_conditions,
    masked_luminance,
    pack_conditions,
    position_mask,
    region_mask_latent,
)
from .codec import LatentCodec
from .flow import (
    InitBlendConfig,
    euler_step,
    init_blend,
    noise_to,
    recover_x0,
    timestep_schedule,
    velocity_target,
)
from .model import (
    ChannelNorm,
    ControlBranch,
    ControlResiduals,
    DenoiserConfig,
    GlyphModel,
    BaseUNet,
    count_parameters,
    load_weights,
    receptive_field_radius,
    resample_mask_nearest,
    save_weights,
    zero_module,
)
from .ocr import (
    LineCrop,
    OcrConfig,
    OcrModel,
    OcrTrainConfig,
    build_training_set,
    char_accuracy,
    crop_lines,
    decode_text,
    edit_distance,
    load_ocr,
    perceptual_loss,
    save_ocr,
    segment_labels,
    text_metrics,
    train_ocr,
)
from .data import (
    AnnotatedSample,
    BackgroundSpec,
    GeneratorConfig,
    SceneSpec,
    generate_samples,
    load_dataset,
    read_dataset,
    sample_scene,
    write_dataset,
)
from .training import (
    TrainConfig,
    TrainState,
    build_state,
    codec_for_denoiser,
    load_checkpoint,
    load_model,
    make_batch,
    prepare_data,
    run_training,
    save_checkpoint,
    train_step,
)
from .sampling import SampleConfig, decode_latents, draw_noise, sample_images, sample_latents
from .evaluation import (
    AblationSpec,
    EvalItem,
    EvalReport,
    background_deviation,
    blank_stub,
    bootstrap_mean_ci,
    bootstrap_ratio_ci,
    circular_hue_distance,
    color_control_report,
    eval_items_from_samples,
    evaluate,
    mean_text_hue,
    model_renderer,
    perfect_stub,
    render_table,
    run_ablation,
    score_images,
    variant_sample_config,
    variant_train_config,
)

__version__ = "0.1.0"
