//! Human advice: the preference-rule language, rule matching against the
//! graph, advice masks, and the soft gates derived from advice gradients.

pub mod gates;
pub mod lang;
pub mod masks;

pub use gates::{advice_gradient, combined_gradient_diag, compute_gates, AdviceState, GateSet};
pub use lang::{
    parse_rules, validate, AttrAtom, Diagnostic, LabelPref, Polarity, PreferenceRule, RelAtom,
    RuleSet,
};
pub use masks::{create_mask, match_rule, AdviceMasks, Binding, LabelAdvice};
