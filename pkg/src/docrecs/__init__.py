"""docrecs: self-hosted related-document recommendations with click analytics."""

from .arms import AlgorithmArm
from .corpus import (
    ConfigError,
    CorpusStore,
    DocumentRecord,
    IngestAborted,
    IngestSummary,
    PartnerConfig,
    RecordRejected,
    get_document,
    ingest_corpus,
    load_partner_configs,
    parse_document_record,
)
from .index import (
    DEFAULT_FIELD_WEIGHTS,
    DEFAULT_QUERY_TERMS,
    Index,
    ScoredCandidate,
    build_index,
    document_vector,
    idf,
    more_like_this,
    tokenize,
)
from .recommenders import (
    PopularityEntry,
    PopularityTable,
    RecommendationSet,
    RecommendedItem,
    produce_recommendations,
    recommend_content_based,
    recommend_most_popular,
    recommend_stereotype,
    rerank_bibliometric,
    select_arm,
)
from .analytics import (
    AnalyticsLog,
    ClickEvent,
    CtrReportRow,
    DeliveryEvent,
    classify_requester,
    collect_log_issues,
    compute_ctr,
    monthly_report,
    popularity_table,
    write_report_csv,
)
from .service import (
    HttpRequestContext,
    HttpResponse,
    LatencySample,
    RaasService,
    build_service,
    serialize_set_json,
    serialize_set_xml,
    serve_http,
)
from .simulate import SimulationResult, SimulationSpec, run_simulation

__version__ = "0.1.0"
