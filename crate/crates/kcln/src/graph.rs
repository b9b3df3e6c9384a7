//! Multi-relational knowledge graphs with per-entity sparse features and
//! labels, loaded from TSV files.
//!
//! File formats:
//!
//! - nodes: `node_id<TAB>label_name<TAB>idx:val,idx:val,...` — label `?`
//!   means unlabeled, the feature list may be empty or absent.
//! - edges: `relation_name<TAB>src_id<TAB>dst_id`
//! - vocab (optional): `feature_name<TAB>feature_index` — needed to resolve
//!   attribute atoms such as `HasWord:fat` to feature indices.
//!
//! Entity ids are arbitrary strings mapped to dense indices in file order.
//! The graph is immutable after load; queries are safe for concurrent reads.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The label string marking an unlabeled entity in nodes files.
const UNLABELED: &str = "?";

#[derive(Debug, Clone)]
pub struct Relation {
    pub name: String,
    /// Deduplicated directed edges, sorted.
    edges: Vec<(usize, usize)>,
    /// Forward adjacency: `adj[i]` = sorted `{ j : (i, j) in edges }`.
    adj: Vec<Vec<usize>>,
    /// Reverse adjacency: `radj[j]` = sorted `{ i : (i, j) in edges }`.
    radj: Vec<Vec<usize>>,
}

impl Relation {
    fn build(name: String, mut edges: Vec<(usize, usize)>, n: usize) -> Self {
        edges.sort_unstable();
        edges.dedup();
        let mut adj = vec![Vec::new(); n];
        let mut radj = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adj[i].push(j);
            radj[j].push(i);
        }
        // adjacency built from sorted edges is already sorted per source;
        // radj needs its own pass
        for l in radj.iter_mut() {
            l.sort_unstable();
        }
        Relation { name, edges, adj, radj }
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn reverse_neighbors(&self, j: usize) -> &[usize] {
        &self.radj[j]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }
}

/// An immutable multi-relational graph: entities with sparse nonnegative
/// feature vectors, optional labels, and typed directed edges.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entity_ids: Vec<String>,
    id_index: HashMap<String, usize>,
    feature_dim: usize,
    /// Per entity: (feature index, value) pairs sorted by index.
    features: Vec<Vec<(usize, f64)>>,
    labels: Vec<Option<usize>>,
    label_names: Vec<String>,
    relations: Vec<Relation>,
    relation_index: HashMap<String, usize>,
    feature_vocab: HashMap<String, usize>,
}

impl KnowledgeGraph {
    pub fn num_entities(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn entity_id(&self, i: usize) -> &str {
        &self.entity_ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    pub fn label_of(&self, i: usize) -> Option<usize> {
        self.labels[i]
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn num_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.label_names.iter().position(|l| l == name)
    }

    pub fn features_of(&self, i: usize) -> &[(usize, f64)] {
        &self.features[i]
    }

    pub fn feature_value(&self, i: usize, f: usize) -> f64 {
        match self.features[i].binary_search_by_key(&f, |&(idx, _)| idx) {
            Ok(pos) => self.features[i][pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn feature_vocab(&self) -> &HashMap<String, usize> {
        &self.feature_vocab
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn relation_names(&self) -> Vec<String> {
        self.relations.iter().map(|r| r.name.clone()).collect()
    }

    pub fn relation_by_name(&self, name: &str) -> Option<&Relation> {
        self.relation_index.get(name).map(|&i| &self.relations[i])
    }

    pub fn relation_position(&self, name: &str) -> Option<usize> {
        self.relation_index.get(name).copied()
    }

    /// `N_r(i)`: neighbors of entity `i` under the named relation.
    pub fn neighbors(&self, i: usize, relation: &str) -> Result<&[usize]> {
        let rel = self
            .relation_by_name(relation)
            .ok_or_else(|| Error::Referential(format!("unknown relation '{relation}'")))?;
        Ok(rel.neighbors(i))
    }

    /// Indices of all labeled entities, ascending.
    pub fn labeled_ids(&self) -> Vec<usize> {
        (0..self.num_entities())
            .filter(|&i| self.labels[i].is_some())
            .collect()
    }

    /// Mean total neighbor count across all relations — the context
    /// normalizer `z`. Callers clamp to >= 1 before use.
    pub fn average_degree(&self) -> Result<f64> {
        let n = self.num_entities();
        if n == 0 {
            return Err(Error::Config("average_degree of empty graph".into()));
        }
        let total: usize = self
            .relations
            .iter()
            .map(|r| r.adj.iter().map(Vec::len).sum::<usize>())
            .sum();
        Ok(total as f64 / n as f64)
    }

    /// Deterministic train/test split over labeled entities.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<DataSplit> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must be in (0,1), got {train_fraction}"
            )));
        }
        let mut labeled = self.labeled_ids();
        if labeled.is_empty() {
            return Err(Error::Config("split: graph has no labeled entities".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        labeled.shuffle(&mut rng);
        let n_train = (train_fraction * labeled.len() as f64).round() as usize;
        let mut train_ids: Vec<usize> = labeled[..n_train].to_vec();
        let mut test_ids: Vec<usize> = labeled[n_train..].to_vec();
        train_ids.sort_unstable();
        test_ids.sort_unstable();
        Ok(DataSplit { train_ids, test_ids, seed })
    }

    /// Serialize back to the three TSV formats. Canonical order: entities by
    /// index, edges sorted per relation, vocab by feature index.
    pub fn to_tsv(&self) -> (String, String, String) {
        let mut nodes = String::new();
        for i in 0..self.num_entities() {
            let label = match self.labels[i] {
                Some(l) => self.label_names[l].as_str(),
                None => UNLABELED,
            };
            let feats = self.features[i]
                .iter()
                .map(|(idx, v)| format!("{idx}:{v}"))
                .collect::<Vec<_>>()
                .join(",");
            writeln!(nodes, "{}\t{}\t{}", self.entity_ids[i], label, feats).unwrap();
        }
        let mut edges = String::new();
        for rel in &self.relations {
            for &(i, j) in &rel.edges {
                writeln!(edges, "{}\t{}\t{}", rel.name, self.entity_ids[i], self.entity_ids[j])
                    .unwrap();
            }
        }
        let mut vocab_entries: Vec<(&String, &usize)> = self.feature_vocab.iter().collect();
        vocab_entries.sort_by_key(|&(_, idx)| *idx);
        let mut vocab = String::new();
        for (name, idx) in vocab_entries {
            writeln!(vocab, "{name}\t{idx}").unwrap();
        }
        (nodes, edges, vocab)
    }

    /// Write the entity id -> dense index mapping, for traceability of any
    /// emitted per-entity output.
    pub fn write_id_map(&self, path: &Path) -> Result<()> {
        let mut out = String::from("entity_id\tindex\n");
        for (i, id) in self.entity_ids.iter().enumerate() {
            writeln!(out, "{id}\t{i}").unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// A train/test partition of the labeled entities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub seed: u64,
}

impl DataSplit {
    /// Deterministic subset of the training ids of size
    /// `round(fraction * |train|)`.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<Vec<usize>> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!(
                "sample fraction must be in (0,1], got {fraction}"
            )));
        }
        let mut ids = self.train_ids.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ids.shuffle(&mut rng);
        let n = (fraction * ids.len() as f64).round() as usize;
        let mut out = ids[..n.min(ids.len())].to_vec();
        out.sort_unstable();
        Ok(out)
    }
}

/// In-memory description of one entity prior to index assignment; used by
/// the TSV loader and the synthetic generator.
#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub id: String,
    pub label: Option<String>,
    pub features: Vec<(usize, f64)>,
}

/// Parse the nodes TSV. Returns records in file order.
pub fn parse_nodes(text: &str, path: &str) -> Result<Vec<NodeRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or("");
        let label = fields.next().ok_or_else(|| Error::Parse {
            path: path.into(),
            line: lineno,
            msg: "expected node_id<TAB>label[<TAB>features]".into(),
        })?;
        let feats_field = fields.next().unwrap_or("");
        if fields.next().is_some() {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: "too many tab-separated fields".into(),
            });
        }
        if id.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: "empty node id".into(),
            });
        }
        let mut features = Vec::new();
        if !feats_field.is_empty() {
            for part in feats_field.split(',') {
                let (idx_s, val_s) = part.split_once(':').ok_or_else(|| Error::Parse {
                    path: path.into(),
                    line: lineno,
                    msg: format!("feature '{part}' is not idx:val"),
                })?;
                let idx: usize = idx_s.parse().map_err(|_| Error::Parse {
                    path: path.into(),
                    line: lineno,
                    msg: format!("bad feature index '{idx_s}'"),
                })?;
                let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                    path: path.into(),
                    line: lineno,
                    msg: format!("bad feature value '{val_s}'"),
                })?;
                if !val.is_finite() || val < 0.0 {
                    return Err(Error::Parse {
                        path: path.into(),
                        line: lineno,
                        msg: format!("feature value {val} must be finite and nonnegative"),
                    });
                }
                features.push((idx, val));
            }
        }
        features.sort_unstable_by_key(|&(idx, _)| idx);
        if features.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: "duplicate feature index".into(),
            });
        }
        let label = if label == UNLABELED {
            None
        } else {
            Some(label.to_string())
        };
        records.push(NodeRecord {
            id: id.to_string(),
            label,
            features,
        });
    }
    Ok(records)
}

/// Parse the edges TSV into (relation, src_id, dst_id) string triples.
pub fn parse_edges(text: &str, path: &str) -> Result<Vec<(String, String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: "expected relation<TAB>src_id<TAB>dst_id".into(),
            });
        }
        out.push((
            fields[0].to_string(),
            fields[1].to_string(),
            fields[2].to_string(),
        ));
    }
    Ok(out)
}

/// Parse the vocab TSV (`feature_name<TAB>feature_index`).
pub fn parse_vocab(text: &str, path: &str) -> Result<HashMap<String, usize>> {
    let mut vocab = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let (name, idx_s) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.into(),
            line: lineno,
            msg: "expected feature_name<TAB>feature_index".into(),
        })?;
        let idx: usize = idx_s.trim().parse().map_err(|_| Error::Parse {
            path: path.into(),
            line: lineno,
            msg: format!("bad feature index '{idx_s}'"),
        })?;
        if name.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: "empty feature name".into(),
            });
        }
        if vocab.insert(name.to_string(), idx).is_some() {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                msg: format!("duplicate feature name '{name}'"),
            });
        }
    }
    Ok(vocab)
}

/// Assemble a graph from parsed parts. `symmetrize` adds the reverse of
/// every edge; duplicate (relation, src, dst) triples collapse either way.
pub fn build_graph(
    nodes: Vec<NodeRecord>,
    edges: Vec<(String, String, String)>,
    vocab: HashMap<String, usize>,
    symmetrize: bool,
) -> Result<KnowledgeGraph> {
    let mut id_index = HashMap::with_capacity(nodes.len());
    let mut entity_ids = Vec::with_capacity(nodes.len());
    for rec in &nodes {
        if id_index.insert(rec.id.clone(), entity_ids.len()).is_some() {
            return Err(Error::Referential(format!("duplicate node id '{}'", rec.id)));
        }
        entity_ids.push(rec.id.clone());
    }

    let mut label_names: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(nodes.len());
    let mut feature_dim = vocab.values().map(|&i| i + 1).max().unwrap_or(0);
    let mut features = Vec::with_capacity(nodes.len());
    for rec in nodes {
        let label = rec.label.map(|name| {
            match label_names.iter().position(|l| *l == name) {
                Some(i) => i,
                None => {
                    label_names.push(name);
                    label_names.len() - 1
                }
            }
        });
        labels.push(label);
        if let Some(&(idx, _)) = rec.features.last() {
            feature_dim = feature_dim.max(idx + 1);
        }
        features.push(rec.features);
    }

    let n = entity_ids.len();
    let mut rel_order: Vec<String> = Vec::new();
    let mut rel_edges: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
    for (rel, src, dst) in edges {
        let &si = id_index
            .get(&src)
            .ok_or_else(|| Error::Referential(format!("edge references unknown node '{src}'")))?;
        let &di = id_index
            .get(&dst)
            .ok_or_else(|| Error::Referential(format!("edge references unknown node '{dst}'")))?;
        let list = rel_edges.entry(rel.clone()).or_insert_with(|| {
            rel_order.push(rel.clone());
            Vec::new()
        });
        list.push((si, di));
        if symmetrize {
            list.push((di, si));
        }
    }

    let mut relations = Vec::with_capacity(rel_order.len());
    let mut relation_index = HashMap::new();
    for name in rel_order {
        let edges = rel_edges.remove(&name).unwrap();
        relation_index.insert(name.clone(), relations.len());
        relations.push(Relation::build(name, edges, n));
    }

    Ok(KnowledgeGraph {
        entity_ids,
        id_index,
        feature_dim,
        features,
        labels,
        label_names,
        relations,
        relation_index,
        feature_vocab: vocab,
    })
}

/// Parse and assemble a graph from in-memory TSV contents.
pub fn load_graph_from_strs(
    nodes_text: &str,
    edges_text: &str,
    vocab_text: Option<&str>,
    symmetrize: bool,
) -> Result<KnowledgeGraph> {
    let nodes = parse_nodes(nodes_text, "<nodes>")?;
    let edges = parse_edges(edges_text, "<edges>")?;
    let vocab = match vocab_text {
        Some(t) => parse_vocab(t, "<vocab>")?,
        None => HashMap::new(),
    };
    build_graph(nodes, edges, vocab, symmetrize)
}

/// Load a graph from TSV files. `symmetrize` defaults to true at every call
/// site: collective classification over citations conventionally treats
/// context as undirected.
pub fn load_graph(
    nodes_path: &Path,
    edges_path: &Path,
    vocab_path: Option<&Path>,
    symmetrize: bool,
) -> Result<KnowledgeGraph> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let nodes_text = read(nodes_path)?;
    let edges_text = read(edges_path)?;
    let nodes = parse_nodes(&nodes_text, &nodes_path.display().to_string())?;
    let edges = parse_edges(&edges_text, &edges_path.display().to_string())?;
    let vocab = match vocab_path {
        Some(p) => {
            let text = read(p)?;
            parse_vocab(&text, &p.display().to_string())?
        }
        None => HashMap::new(),
    };
    build_graph(nodes, edges, vocab, symmetrize)
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entity_ids == other.entity_ids
            && self.feature_dim == other.feature_dim
            && self.features == other.features
            && self.labels == other.labels
            && self.label_names == other.label_names
            && self.feature_vocab == other.feature_vocab
            && self.relations.len() == other.relations.len()
            && self
                .relations
                .iter()
                .zip(&other.relations)
                .all(|(a, b)| a.name == b.name && a.edges == b.edges)
    }
}
