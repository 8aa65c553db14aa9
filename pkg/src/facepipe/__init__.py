"""Face recognition pipeline support: enhancement, detection geometry,
approximate nearest neighbor retrieval, and evaluation tooling."""

from .augment import AugmentConfig, CropResult, multiscale_augment, resize_bilinear
from .bench import (
    BenchReport,
    FrameStreamConfig,
    Probe,
    StreamKind,
    bench_compare,
    format_report,
    format_reports_csv,
    parse_reports_csv,
    simulate_stream,
)
from .detect import (
    IGNORE,
    NEGATIVE,
    AnchorConfig,
    assign_labels,
    generate_anchors,
    iou,
    iou_matrix,
    nms,
    ohem_select,
    read_scored_boxes,
    write_scored_boxes,
)
from .errors import (
    AugmentationError,
    ChecksumError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyIndexError,
    FacepipeError,
    FileFormatError,
    InvariantError,
    MagicError,
    ParseError,
    TruncatedFileError,
    VersionMismatchError,
    ZeroVectorError,
)
from .filters import enhance_for_recognition, median_filter, normalize, wiener_restore
from .hnsw import (
    BruteForceSearcher,
    HnswIndex,
    HnswParams,
    brute_force_knn,
)
from .library import (
    FeatureLibrary,
    LibraryRecord,
    build_library,
    index_library,
    load_library,
    read_bulk_embeddings,
    read_embedding_file,
    save_library,
)
from .matcheval import (
    PairRecord,
    SweepRow,
    identify,
    read_pairs_file,
    threshold_sweep,
    verify_pair,
)
from .model import (
    DistanceMetric,
    Embedding,
    Hit,
    SearchResult,
    cosine_similarity,
    distance,
)
from .raster import (
    FaceAnnotation,
    RasterImage,
    read_annotations,
    read_image,
    write_annotations,
    write_image,
)
from .secondary import (
    CombineOp,
    SecondaryConfig,
    SecondaryStrategy,
    combine,
    expansion_pass,
    secondary_search,
)

__version__ = "0.1.0"
