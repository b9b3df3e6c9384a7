//! Rule matching and advice mask construction.
//!
//! A rule body is matched against the graph by backtracking over its
//! variables (most-constrained first). Every satisfying binding marks mask
//! cells: attribute atoms mark (entity, feature) cells, relation atoms mark
//! both endpoint entities under their relation, and heads record label
//! preferences that are then resolved per entity. The satisfied set holds
//! exactly the entities with any mark; only those are gated downstream.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::advice::lang::{Polarity, PreferenceRule, RuleSet};
use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;

/// An attribute atom holds when the named feature is strictly positive.
const ATTR_THRESHOLD: f64 = 0.0;

/// One satisfying assignment of a rule's variables to entities.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Binding {
    /// variable -> entity index, keyed in lexicographic variable order.
    pub assignments: BTreeMap<String, usize>,
}

impl Binding {
    pub fn entity(&self, var: &str) -> Option<usize> {
        self.assignments.get(var).copied()
    }
}

/// Resolved label advice for one entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelAdvice {
    /// No head ever targeted this entity.
    None,
    /// A preferred label (one-hot row in the label mask).
    Prefer(usize),
    /// Multi-class avoid-only advice: these labels are suppressed.
    Suppress(Vec<usize>),
    /// Conflicting advice on an unlabeled entity; excluded from the
    /// satisfied set entirely.
    Dropped,
}

/// Binary advice masks over entities, features, relations and labels, plus
/// the satisfied set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdviceMasks {
    pub num_entities: usize,
    pub num_labels: usize,
    /// Marked (entity, feature) cells from attribute atoms.
    pub m_w: BTreeSet<(usize, usize)>,
    /// Per-entity OR of the `m_w` row; gates the hidden-unit term.
    pub entity_gate_flag: Vec<bool>,
    /// `m_c[rel][entity]`: the entity participates in a matched atom of
    /// this relation.
    pub m_c: Vec<Vec<bool>>,
    /// Raw matched entity pairs per relation, kept for debugging output.
    pub m_c_pairs: Vec<BTreeSet<(usize, usize)>>,
    /// Per-entity resolved label advice; `Prefer` rows are the one-hot
    /// label mask.
    pub label_advice: Vec<LabelAdvice>,
    /// The satisfied set: any entity with a hidden or context mark.
    pub satisfied: Vec<bool>,
}

impl AdviceMasks {
    pub fn empty(num_entities: usize, num_relations: usize, num_labels: usize) -> Self {
        AdviceMasks {
            num_entities,
            num_labels,
            m_w: BTreeSet::new(),
            entity_gate_flag: vec![false; num_entities],
            m_c: vec![vec![false; num_entities]; num_relations],
            m_c_pairs: vec![BTreeSet::new(); num_relations],
            label_advice: vec![LabelAdvice::None; num_entities],
            satisfied: vec![false; num_entities],
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.satisfied.iter().any(|&s| s)
    }

    pub fn satisfied_ids(&self) -> Vec<usize> {
        (0..self.num_entities).filter(|&i| self.satisfied[i]).collect()
    }

    /// One-hot label mask row for entity `i`.
    pub fn m_label_row(&self, i: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.num_labels];
        if let LabelAdvice::Prefer(l) = self.label_advice[i] {
            row[l] = 1.0;
        }
        row
    }

    /// Write the masks as sparse triples for inspection:
    /// `entity<TAB>feature:IDX|relation:NAME|label:NAME<TAB>1`.
    pub fn dump(&self, g: &KnowledgeGraph, path: &Path) -> Result<()> {
        let mut out = String::new();
        for &(e, f) in &self.m_w {
            writeln!(out, "{}\tfeature:{}\t1", g.entity_id(e), f).unwrap();
        }
        for (r, per_entity) in self.m_c.iter().enumerate() {
            let name = &g.relations()[r].name;
            for (e, &on) in per_entity.iter().enumerate() {
                if on {
                    writeln!(out, "{}\trelation:{}\t1", g.entity_id(e), name).unwrap();
                }
            }
        }
        for (e, advice) in self.label_advice.iter().enumerate() {
            if let LabelAdvice::Prefer(l) = advice {
                writeln!(out, "{}\tlabel:{}\t1", g.entity_id(e), g.label_names()[*l]).unwrap();
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Candidate entities for one variable, from its attribute atoms alone.
fn attr_candidates(g: &KnowledgeGraph, rule: &PreferenceRule, var: &str) -> Vec<usize> {
    let atoms: Vec<&crate::advice::lang::AttrAtom> =
        rule.body_attrs.iter().filter(|a| a.var == var).collect();
    if atoms.is_empty() {
        return (0..g.num_entities()).collect();
    }
    // resolve features; an unresolvable attribute can never hold
    let mut feats = Vec::with_capacity(atoms.len());
    for a in &atoms {
        match g.feature_vocab().get(&a.vocab_key()) {
            Some(&f) => feats.push(f),
            None => return Vec::new(),
        }
    }
    (0..g.num_entities())
        .filter(|&e| feats.iter().all(|&f| g.feature_value(e, f) > ATTR_THRESHOLD))
        .collect()
}

fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// All variable assignments satisfying every body atom, in lexicographic
/// order (by variable name, then entity index). Unsatisfiable or
/// unresolvable rules yield an empty list.
pub fn match_rule(g: &KnowledgeGraph, rule: &PreferenceRule) -> Vec<Binding> {
    let vars = rule.variables();
    if vars.is_empty() {
        return Vec::new();
    }
    // any relation atom naming a relation the graph lacks kills the rule
    for r in &rule.body_rels {
        if g.relation_by_name(&r.rel).is_none() {
            return Vec::new();
        }
    }

    let base: HashMap<&str, Vec<usize>> = vars
        .iter()
        .map(|v| (v.as_str(), attr_candidates(g, rule, v)))
        .collect();

    // most-constrained variable first; name-ordered tie break keeps the
    // search deterministic
    let mut order: Vec<&str> = vars.iter().map(String::as_str).collect();
    order.sort_by_key(|v| (base[v].len(), v.to_string()));

    let mut assigned: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    search(g, rule, &order, 0, &base, &mut assigned, &mut out);
    out.sort();
    out
}

fn search(
    g: &KnowledgeGraph,
    rule: &PreferenceRule,
    order: &[&str],
    depth: usize,
    base: &HashMap<&str, Vec<usize>>,
    assigned: &mut BTreeMap<String, usize>,
    out: &mut Vec<Binding>,
) {
    if depth == order.len() {
        out.push(Binding {
            assignments: assigned.clone(),
        });
        return;
    }
    let var = order[depth];
    // narrow candidates through relation atoms whose other endpoint is bound
    let mut candidates = base[var].clone();
    for r in &rule.body_rels {
        let rel = g.relation_by_name(&r.rel).unwrap();
        if r.var1 == var {
            if let Some(&other) = assigned.get(&r.var2) {
                candidates = intersect_sorted(&candidates, rel.reverse_neighbors(other));
            }
        }
        if r.var2 == var {
            if let Some(&other) = assigned.get(&r.var1) {
                candidates = intersect_sorted(&candidates, rel.neighbors(other));
            }
        }
        if candidates.is_empty() {
            return;
        }
    }
    for e in candidates {
        // self-referential atoms (both endpoints this var) checked here
        let ok = rule.body_rels.iter().all(|r| {
            if r.var1 == var && r.var2 == var {
                g.relation_by_name(&r.rel).unwrap().has_edge(e, e)
            } else {
                true
            }
        });
        if !ok {
            continue;
        }
        assigned.insert(var.to_string(), e);
        search(g, rule, order, depth + 1, base, assigned, out);
        assigned.remove(var);
    }
}

/// Resolve one entity's head hits into final label advice.
///
/// Prefer heads vote for their label; avoid heads vote for the complement
/// in binary classification and are recorded as suppressions otherwise.
/// Ties between distinct top-voted labels fall back to the entity's data
/// label; unlabeled entities with a tie are dropped from the satisfied set.
pub fn resolve_labels(
    votes: &[(usize, Polarity)],
    data_label: Option<usize>,
    num_labels: usize,
) -> LabelAdvice {
    if votes.is_empty() {
        return LabelAdvice::None;
    }
    let mut prefer_counts = vec![0usize; num_labels];
    let mut suppressed: BTreeSet<usize> = BTreeSet::new();
    for &(label, pol) in votes {
        match pol {
            Polarity::Prefer => prefer_counts[label] += 1,
            Polarity::Avoid => {
                if num_labels == 2 {
                    prefer_counts[1 - label] += 1;
                } else {
                    suppressed.insert(label);
                }
            }
        }
    }
    let best = prefer_counts.iter().max().copied().unwrap_or(0);
    if best == 0 {
        return LabelAdvice::Suppress(suppressed.into_iter().collect());
    }
    let winners: Vec<usize> = (0..num_labels)
        .filter(|&l| prefer_counts[l] == best)
        .collect();
    if winners.len() == 1 {
        LabelAdvice::Prefer(winners[0])
    } else {
        match data_label {
            Some(y) => LabelAdvice::Prefer(y),
            None => LabelAdvice::Dropped,
        }
    }
}

/// Match every rule and assemble the advice masks and satisfied set.
pub fn create_mask(g: &KnowledgeGraph, rules: &RuleSet) -> AdviceMasks {
    let mut masks = AdviceMasks::empty(g.num_entities(), g.num_relations(), g.num_labels());
    let mut votes: Vec<Vec<(usize, Polarity)>> = vec![Vec::new(); g.num_entities()];

    for rule in &rules.rules {
        for binding in match_rule(g, rule) {
            for a in &rule.body_attrs {
                let e = binding.entity(&a.var).unwrap();
                if let Some(&f) = g.feature_vocab().get(&a.vocab_key()) {
                    masks.m_w.insert((e, f));
                }
            }
            for r in &rule.body_rels {
                let rel_idx = g.relation_position(&r.rel).unwrap();
                let e1 = binding.entity(&r.var1).unwrap();
                let e2 = binding.entity(&r.var2).unwrap();
                // both endpoints of a matched relation atom are affected
                masks.m_c[rel_idx][e1] = true;
                masks.m_c[rel_idx][e2] = true;
                masks.m_c_pairs[rel_idx].insert((e1, e2));
            }
            for h in &rule.heads {
                let e = binding.entity(&h.var).unwrap();
                if let Some(l) = g.label_index(&h.label) {
                    votes[e].push((l, h.polarity));
                }
            }
        }
    }

    for i in 0..g.num_entities() {
        masks.label_advice[i] = resolve_labels(&votes[i], g.label_of(i), g.num_labels());
    }

    // conflicting advice on unlabeled entities removes the entity's marks
    for i in 0..g.num_entities() {
        if masks.label_advice[i] == LabelAdvice::Dropped {
            masks.m_w.retain(|&(e, _)| e != i);
            for per_entity in masks.m_c.iter_mut() {
                per_entity[i] = false;
            }
        }
    }

    for &(e, _) in &masks.m_w {
        masks.entity_gate_flag[e] = true;
    }
    for i in 0..g.num_entities() {
        masks.satisfied[i] =
            masks.entity_gate_flag[i] || masks.m_c.iter().any(|per| per[i]);
    }
    masks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advice::lang::parse_rules;
    use crate::graph::{load_graph_from_strs, KnowledgeGraph};

    fn graph_with_fat() -> KnowledgeGraph {
        // entities 0..8; entities 2 and 7 carry feature 'fat' (index 0)
        let mut nodes = String::new();
        for i in 0..8 {
            let feats = if i == 2 || i == 7 { "0:0.8" } else { "" };
            nodes.push_str(&format!("e{i}\ttype1\t{feats}\n"));
        }
        load_graph_from_strs(
            &nodes,
            "Cites\te5\te3\nCites\te1\te2\n",
            Some("HasWord:fat\t0\n"),
            false,
        )
        .unwrap()
    }

    #[test]
    fn single_var_attribute_match() {
        let g = graph_with_fat();
        let rs = parse_rules("HasWord(E,'fat') => label(E,type1)+").unwrap();
        let bindings = match_rule(&g, &rs.rules[0]);
        let entities: Vec<usize> = bindings.iter().map(|b| b.entity("E").unwrap()).collect();
        assert_eq!(entities, vec![2, 7]);
    }

    #[test]
    fn relation_atom_on_edgeless_graph_matches_nothing() {
        let g = load_graph_from_strs("a\tx\t\nb\tx\t\n", "", None, true).unwrap();
        let rs = parse_rules("link(E1,E2) => label(E1,x)+").unwrap();
        assert!(match_rule(&g, &rs.rules[0]).is_empty());
    }

    #[test]
    fn two_var_rule_equals_exhaustive_enumeration() {
        let g = load_graph_from_strs(
            "a\tx\t0:1.0\nb\tx\t\nc\tx\t0:0.5\nd\tx\t\n",
            "r\ta\tb\nr\tc\td\nr\td\ta\n",
            Some("W:k\t0\n"),
            false,
        )
        .unwrap();
        let rs = parse_rules("W(E1,'k') & r(E1,E2) => label(E2,x)+").unwrap();
        let rule = &rs.rules[0];
        let got = match_rule(&g, rule);

        // brute force over all 4x4 assignments
        let rel = g.relation_by_name("r").unwrap();
        let f = g.feature_vocab()["W:k"];
        let mut expected = Vec::new();
        for e1 in 0..4 {
            for e2 in 0..4 {
                if g.feature_value(e1, f) > 0.0 && rel.has_edge(e1, e2) {
                    let mut assignments = BTreeMap::new();
                    assignments.insert("E1".to_string(), e1);
                    assignments.insert("E2".to_string(), e2);
                    expected.push(Binding { assignments });
                }
            }
        }
        expected.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn bindings_in_lexicographic_order() {
        let g = load_graph_from_strs(
            "a\tx\t0:1\nb\tx\t0:1\nc\tx\t0:1\n",
            "",
            Some("W:k\t0\n"),
            true,
        )
        .unwrap();
        let rs = parse_rules("W(A,'k') & W(B,'k') => label(A,x)+").unwrap();
        let got = match_rule(&g, &rs.rules[0]);
        assert_eq!(got.len(), 9);
        let pairs: Vec<(usize, usize)> = got
            .iter()
            .map(|b| (b.entity("A").unwrap(), b.entity("B").unwrap()))
            .collect();
        let mut sorted = pairs.clone();
        sorted.sort();
        assert_eq!(pairs, sorted);
    }

    fn mask_graph() -> KnowledgeGraph {
        // 6 entities; entity 3 has 'fat'; edge Cites(e5, e3)
        let mut nodes = String::new();
        for i in 0..6 {
            let feats = if i == 3 { "0:1.0" } else { "" };
            let label = if i == 5 { "type2" } else { "type1" };
            nodes.push_str(&format!("e{i}\t{label}\t{feats}\n"));
        }
        load_graph_from_strs(
            &nodes,
            "Cites\te5\te3\n",
            Some("HasWord:fat\t0\n"),
            false,
        )
        .unwrap()
    }

    #[test]
    fn create_mask_marks_cells_per_binding() {
        let g = mask_graph();
        let rs =
            parse_rules("HasWord(E1,'fat') & Cites(E2,E1) => label(E2,type2)+").unwrap();
        let masks = create_mask(&g, &rs);
        assert!(masks.m_w.contains(&(3, 0)));
        assert!(masks.m_c[0][5] && masks.m_c[0][3]);
        assert_eq!(masks.label_advice[5], LabelAdvice::Prefer(1));
        assert_eq!(masks.m_label_row(5), vec![0.0, 1.0]);
        assert!(masks.satisfied[3] && masks.satisfied[5]);
        assert!(!masks.satisfied[0]);
        assert!(masks.entity_gate_flag[3]);
        assert!(!masks.entity_gate_flag[5]);
        assert!(masks.m_c_pairs[0].contains(&(5, 3)));
    }

    #[test]
    fn no_match_means_empty_masks() {
        let g = mask_graph();
        let rs = parse_rules("HasWord(E1,'zzz') => label(E1,type1)+").unwrap();
        let masks = create_mask(&g, &rs);
        assert!(masks.is_empty());
        assert!(masks.m_w.is_empty());
        assert!(masks.satisfied_ids().is_empty());
    }

    #[test]
    fn masks_stay_binary_under_repeated_marks() {
        let g = mask_graph();
        let rs = parse_rules(
            "HasWord(E1,'fat') & Cites(E2,E1) => label(E2,type2)+\nHasWord(E1,'fat') & Cites(E2,E1) => label(E2,type2)+",
        )
        .unwrap();
        let masks = create_mask(&g, &rs);
        // sets and booleans cannot exceed 1 no matter how many rules re-mark
        assert_eq!(masks.m_w.len(), 1);
        assert_eq!(masks.label_advice[5], LabelAdvice::Prefer(1));
    }

    #[test]
    fn rule_order_does_not_change_masks() {
        let g = mask_graph();
        let a = parse_rules(
            "HasWord(E1,'fat') => label(E1,type1)+\nCites(E2,E1) => label(E2,type2)+",
        )
        .unwrap();
        let b = parse_rules(
            "Cites(E2,E1) => label(E2,type2)+\nHasWord(E1,'fat') => label(E1,type1)+",
        )
        .unwrap();
        assert_eq!(create_mask(&g, &a), create_mask(&g, &b));
    }

    #[test]
    fn resolve_majority() {
        let votes = vec![
            (1, Polarity::Prefer),
            (1, Polarity::Prefer),
            (1, Polarity::Prefer),
            (0, Polarity::Prefer),
        ];
        assert_eq!(resolve_labels(&votes, Some(0), 3), LabelAdvice::Prefer(1));
    }

    #[test]
    fn resolve_tie_falls_back_to_data_label() {
        let votes = vec![
            (0, Polarity::Prefer),
            (0, Polarity::Prefer),
            (1, Polarity::Prefer),
            (1, Polarity::Prefer),
        ];
        assert_eq!(resolve_labels(&votes, Some(0), 3), LabelAdvice::Prefer(0));
        assert_eq!(resolve_labels(&votes, None, 3), LabelAdvice::Dropped);
    }

    #[test]
    fn resolve_binary_avoid_is_complement() {
        let votes = vec![(0, Polarity::Avoid)];
        assert_eq!(resolve_labels(&votes, None, 2), LabelAdvice::Prefer(1));
    }

    #[test]
    fn resolve_multiclass_avoid_suppresses() {
        let votes = vec![(2, Polarity::Avoid), (0, Polarity::Avoid)];
        assert_eq!(
            resolve_labels(&votes, Some(1), 3),
            LabelAdvice::Suppress(vec![0, 2])
        );
    }

    #[test]
    fn dropped_entity_leaves_satisfied_set() {
        // two rules tie conflicting labels on the unlabeled entity b
        let g = load_graph_from_strs(
            "a\ttype1\t0:1\nb\t?\t1:1\nc\ttype2\t\n",
            "r\tb\ta\n",
            Some("W:x\t0\nW:y\t1\n"),
            false,
        )
        .unwrap();
        let rs = parse_rules(
            "W(B,'y') => label(B,type1)+\nW(B,'y') => label(B,type2)+",
        )
        .unwrap();
        let masks = create_mask(&g, &rs);
        let b = g.index_of("b").unwrap();
        assert_eq!(masks.label_advice[b], LabelAdvice::Dropped);
        assert!(!masks.satisfied[b]);
        assert!(masks.m_w.iter().all(|&(e, _)| e != b));
    }
}
