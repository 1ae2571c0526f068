"""Lung-block quality control for low-dose CT and score-comparison statistics."""

from .dicom import (
    DicomHeader,
    HuSlice,
    SeriesRecord,
    SortedSeries,
    assemble_series,
    hu_convert,
    parse_dicom_file,
    scan_directory,
)
from .export import (
    LungBlock,
    WindowConfig,
    export_block,
    quantize_block,
    window_rescale,
    write_montage_pgm,
    write_npy_int16,
)
from .lung import LungDetectConfig, LungSliceDetector, SliceLungStats, detect_lung_slice, threshold_hu
from .morphology import filter_components, morph_close, morph_open
from .pipeline import PipelineConfig, load_config, run_qc
from .report import QcRecord, QcSummary, summarize, write_qc_csv
from .scoring import (
    PatientPooler,
    PatientScore,
    ScoreTable,
    load_scores_csv,
    pool_patient,
    within_patient_dispersion,
)
from .series_qc import (
    GateConfig,
    LungBlockExtractor,
    SeriesOutcome,
    extract_longest_block,
    gate_series,
    process_series,
)
from .stats import (
    auc,
    bland_altman,
    brier,
    confusion_metrics,
    delong_test,
    ks_two_sample,
    roc_curve,
)

__version__ = "0.1.0"
