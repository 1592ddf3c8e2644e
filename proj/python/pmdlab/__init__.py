"""Tabular policy mirror descent with finite memory."""

from ._pmdlab import (
    Mdp,
    PmdlabError,
    api_bound_vanilla,
    api_bound_wc,
    chain_mdp,
    closed_form_update,
    evaluate_policy,
    exact_epmd_bound,
    exact_rate,
    gridworld_mdp,
    min_memory,
    min_memory_threshold,
    preset_names,
    preset_text,
    random_mdp,
    run_config,
    run_pmd,
    softmax_policy,
    solve_optimal,
    staq_run,
    vanilla_bound,
    vanilla_c1,
    wc_constants,
    xk_sequence,
)


def error_kind(exc: PmdlabError) -> str:
    """Error kind name carried in the message prefix, e.g. "UnknownKey"."""
    return str(exc).split(":", 1)[0]


__all__ = [name for name in dir() if not name.startswith("_")]
