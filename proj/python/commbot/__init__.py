from ._core import (
    Bundle,
    CommbotError,
    EdgeList,
    Label,
    UserStore,
    default_settings,
    generate_community,
    individual_metrics,
    load_edges,
    load_users,
    run_sweep,
    save_edges,
    save_users,
    train,
)

__all__ = [
    "Bundle",
    "CommbotError",
    "EdgeList",
    "Label",
    "UserStore",
    "default_settings",
    "generate_community",
    "individual_metrics",
    "load_edges",
    "load_users",
    "run_sweep",
    "save_edges",
    "save_users",
    "train",
]
