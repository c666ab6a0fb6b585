"""A miniature dependently-typed kernel and typeclass elaborator for
studying how structure multiple inheritance interacts with definitional
equality and instance search."""

from .analyzer import (
    ANALYZER_REPORT_SCHEMA,
    CycleDetected,
    Diamond,
    DiamondReport,
    HierGraph,
    PlacementReport,
    analyze,
    build_graph,
    check_diamond,
    commutes_under,
    enumerate_diamonds,
    predict_diamond,
    random_hierarchy,
    report_dict,
    spanning_search,
)
from .declarations import DefDecl, Environment, OpaqueDecl, StructDecl
from .elaborator import (
    ElabError,
    Elaboration,
    EncodingStrategy,
    FieldTypeClash,
    InstanceInfo,
    elaborate,
    flatten_fields,
    preferred_edges,
)
from .kernel import (
    DEFAULT_CONFIG,
    DefEqConfig,
    IllTyped,
    KernelError,
    MetaCtx,
    Trace,
    check_type,
    defeq,
    infer_type,
    unify,
    whnf,
)
from .resolution import DepthExceeded, NotFound, ResolutionError, resolve
from .surface import (
    ParseError,
    ScopeError,
    SurfaceError,
    SurfaceModule,
    parse,
    parse_term,
    print_module,
)
from .terms import (
    App,
    Binder,
    BoundVar,
    Const,
    FreeVar,
    Lam,
    Meta,
    Mk,
    Pi,
    Proj,
    Sort,
    Term,
    apps,
    pp_term,
)

__version__ = "0.1.0"
