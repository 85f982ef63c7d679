//! Exact decomposition tables for multitiered experiments.
//!
//! Each tier of an experiment carries a structure: a set of mutually
//! orthogonal projectors built from its factors. Randomizations link the
//! tiers through design functions. [`balance`] decides whether one structure
//! is structure balanced in relation to another and combines them into a
//! joint decomposition, which [`report`] renders as a table.

pub mod algebra;
pub mod balance;
pub mod model;
pub mod report;
pub mod structure;

pub use algebra::{
    float_spectrum, float_spectrum_of, format_rational, parse_rational, AlgebraError, LabelSet,
    LabeledMatrix, Labels, Rational, SpectrumReport,
};
pub use balance::{
    associativity_check, chain, chain_fast, check_balance, efficiency_factor, efficiency_matrix,
    efficiency_product_check, pertain, refine, residual, same_projector_sets, BalanceError,
    BalanceReport, Cell, CellKind, ChainOutcome, ChainStep, DecompRow, Decomposition,
    EfficiencyMatrix, Mode, Tier, Verdict, Violation, ViolationKind,
};
pub use model::{
    build_hasse, expand, parse_formula, Factor, GeneralizedFactor, HasseDiagram, HasseNode,
    ModelError, TierFormula,
};
pub use report::{parse_machine, render_machine, render_step, render_text, ReportError, TextOptions};
pub use structure::{
    build_structure, derive_design_function, embed, merge_sources, refine_with_pseudofactors,
    AllocationTable, DesignFunction, ObjectSet, PseudofactorDecl, Source, Structure,
    StructureError,
};
