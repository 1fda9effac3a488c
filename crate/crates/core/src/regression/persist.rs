//! Versioned plain-text model files.
//!
//! Reals are written in Rust's shortest round-trip notation, so a saved model
//! loads back bit-identical.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{FeatureKind, Forest, ForestParams, LinearModel, LinearTerm, Node, Tree};
use crate::error::{Error, Result};

const MAGIC: &str = "agbmap-model";
const VERSION: u32 = 1;

/// A persisted trend model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Forest(Forest),
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

impl Model {
    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC} {VERSION}\n");
        match self {
            Model::Linear(m) => {
                let _ = writeln!(s, "kind linear");
                let _ = writeln!(s, "n_obs {}", m.n_obs);
                let _ = writeln!(s, "intercept {:?}", m.intercept);
                let _ = writeln!(s, "rss {:?}", m.rss);
                let _ = writeln!(s, "bic {:?}", m.bic);
                let _ = writeln!(s, "selected {}", m.selected_features.join(" "));
                let _ = writeln!(s, "terms {}", m.terms.len());
                for t in &m.terms {
                    let level = t.level.map_or("-".to_string(), |l| l.to_string());
                    let _ = writeln!(s, "term {} {level} {:?}", t.feature, t.coef);
                }
            }
            Model::Forest(f) => {
                let _ = writeln!(s, "kind forest");
                let _ = writeln!(s, "n_trees {}", f.params.n_trees);
                let _ = writeln!(s, "mtry {}", f.params.mtry.unwrap_or(0));
                let _ = writeln!(s, "min_leaf {}", f.params.min_leaf);
                let _ = writeln!(s, "seed {}", f.seed);
                let _ = writeln!(s, "oob_error {:?}", f.oob_error);
                let _ = writeln!(s, "features {}", f.feature_names.len());
                for (n, k) in f.feature_names.iter().zip(&f.feature_kinds) {
                    match k {
                        FeatureKind::Numeric => {
                            let _ = writeln!(s, "feature {n} numeric");
                        }
                        FeatureKind::Categorical { levels } => {
                            let _ = writeln!(s, "feature {n} categorical {levels}");
                        }
                    }
                }
                for t in &f.trees {
                    let _ = writeln!(s, "tree {}", t.nodes.len());
                    for node in &t.nodes {
                        let _ = match node {
                            Node::Leaf(v) => writeln!(s, "L {v:?}"),
                            Node::Split { feature, threshold, left, right } => {
                                writeln!(s, "S {feature} {threshold:?} {left} {right}")
                            }
                            Node::Subset { feature, left_mask, left, right } => {
                                writeln!(s, "C {feature} {left_mask} {left} {right}")
                            }
                        };
                    }
                }
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Lines { it: text.lines().filter(|l| !l.trim().is_empty()).enumerate() };
        let head = r.line()?;
        if head.first() != Some(&MAGIC) {
            return Err(bad("missing format tag"));
        }
        let version: u32 = parse_tok(head.get(1).copied())?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let model = match r.value("kind")?.as_str() {
            "linear" => {
                let n_obs = r.num("n_obs")?;
                let intercept = r.num("intercept")?;
                let rss = r.num("rss")?;
                let bic = r.num("bic")?;
                let sel = r.line()?;
                if sel.first() != Some(&"selected") {
                    return Err(bad("expected `selected`"));
                }
                let selected_features = sel[1..].iter().map(|s| s.to_string()).collect();
                let n_terms: usize = r.num("terms")?;
                let mut terms = Vec::with_capacity(n_terms);
                for _ in 0..n_terms {
                    let t = r.line()?;
                    if t.len() != 4 || t[0] != "term" {
                        return Err(bad("malformed term line"));
                    }
                    let level = if t[2] == "-" { None } else { Some(parse_tok(Some(t[2]))?) };
                    terms.push(LinearTerm { feature: t[1].to_string(), level, coef: parse_tok(Some(t[3]))? });
                }
                Model::Linear(LinearModel { intercept, terms, selected_features, rss, bic, n_obs })
            }
            "forest" => {
                let n_trees: usize = r.num("n_trees")?;
                let mtry: usize = r.num("mtry")?;
                let min_leaf = r.num("min_leaf")?;
                let seed = r.num("seed")?;
                let oob_error = r.num("oob_error")?;
                let nf: usize = r.num("features")?;
                let mut feature_names = Vec::with_capacity(nf);
                let mut feature_kinds = Vec::with_capacity(nf);
                for _ in 0..nf {
                    let t = r.line()?;
                    let kind = match (t.first(), t.get(2), t.get(3)) {
                        (Some(&"feature"), Some(&"numeric"), None) => FeatureKind::Numeric,
                        (Some(&"feature"), Some(&"categorical"), lv) => FeatureKind::Categorical { levels: parse_tok(lv.copied())? },
                        _ => return Err(bad("malformed feature line")),
                    };
                    feature_names.push(t[1].to_string());
                    feature_kinds.push(kind);
                }
                let mut trees = Vec::with_capacity(n_trees);
                for _ in 0..n_trees {
                    let nn: usize = r.num("tree")?;
                    let mut nodes = Vec::with_capacity(nn);
                    for _ in 0..nn {
                        let t = r.line()?;
                        let tok = |i: usize| t.get(i).copied();
                        nodes.push(match (t[0], t.len()) {
                            ("L", 2) => Node::Leaf(parse_tok(tok(1))?),
                            ("S", 5) => Node::Split {
                                feature: parse_tok(tok(1))?,
                                threshold: parse_tok(tok(2))?,
                                left: parse_tok(tok(3))?,
                                right: parse_tok(tok(4))?,
                            },
                            ("C", 5) => Node::Subset {
                                feature: parse_tok(tok(1))?,
                                left_mask: parse_tok(tok(2))?,
                                left: parse_tok(tok(3))?,
                                right: parse_tok(tok(4))?,
                            },
                            _ => return Err(bad("malformed node line")),
                        });
                    }
                    check_tree(&nodes, nf)?;
                    trees.push(Tree { nodes });
                }
                let params = ForestParams { n_trees, mtry: Some(mtry), min_leaf };
                Model::Forest(Forest { trees, params, seed, oob_error, feature_names, feature_kinds })
            }
            other => return Err(bad(format!("unknown model kind `{other}`"))),
        };
        if r.line()? != ["end"] {
            return Err(bad("expected `end`"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn check_tree(nodes: &[Node], nf: usize) -> Result<()> {
    let n = nodes.len() as u32;
    for (i, node) in nodes.iter().enumerate() {
        if let Node::Split { feature, left, right, .. } | Node::Subset { feature, left, right, .. } = *node {
            if feature as usize >= nf || left >= n || right >= n || left as usize <= i || right as usize <= i {
                return Err(bad("tree node references are out of range"));
            }
        }
    }
    if nodes.is_empty() {
        return Err(bad("empty tree"));
    }
    Ok(())
}

fn parse_tok<T: FromStr>(tok: Option<&str>) -> Result<T> {
    let t = tok.ok_or_else(|| bad("missing value"))?;
    t.parse().map_err(|_| bad(format!("cannot parse `{t}`")))
}

struct Lines<'a, I: Iterator<Item = (usize, &'a str)>> {
    it: I,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Lines<'a, I> {
    fn line(&mut self) -> Result<Vec<&'a str>> {
        let (_, l) = self.it.next().ok_or_else(|| bad("unexpected end of file"))?;
        Ok(l.split_whitespace().collect())
    }

    fn value(&mut self, key: &str) -> Result<String> {
        let l = self.line()?;
        match l.as_slice() {
            [k, v] if *k == key => Ok(v.to_string()),
            _ => Err(bad(format!("expected `{key} <value>`"))),
        }
    }

    fn num<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.value(key)?;
        parse_tok(Some(&v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{fit_ols, fit_random_forest, DesignMatrix};

    fn design() -> DesignMatrix {
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 3.3).collect();
        let codes: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let y: Vec<f64> = (0..n).map(|i| x[i] * 1.7 + codes[i] as f64 / 3.0 + 0.1).collect();
        let mut d = DesignMatrix::new(y).unwrap();
        d.push_numeric("x", x).unwrap();
        d.push_categorical("cls", &codes, 3).unwrap();
        d
    }

    #[test]
    fn linear_round_trip() {
        let m = Model::Linear(fit_ols(&design()).unwrap());
        assert_eq!(Model::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn forest_round_trip() {
        let f = fit_random_forest(&design(), &ForestParams { n_trees: 5, ..Default::default() }, 8).unwrap();
        let m = Model::Forest(f);
        let text = m.to_text();
        assert_eq!(Model::from_text(&text).unwrap(), m);
        assert_eq!(Model::from_text(&text).unwrap().to_text(), text);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Model::from_text("hello").is_err());
        assert!(Model::from_text("agbmap-model 9\nkind linear\n").is_err());
        let m = Model::Linear(fit_ols(&design()).unwrap()).to_text();
        assert!(Model::from_text(&m.replace("end\n", "")).is_err());
    }
}
