//! End-to-end classifiers (attribute scaling, kernel expansion, model) and
//! their on-disk format.
//!
//! The model file is line-oriented UTF-8 text starting with
//! `krv-model 1`. Every float is written in Rust's shortest round-trip
//! form, so a save/load cycle reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::{AttributeKind, Dataset, RawColumn, RowMatrix, Scaling, Schema, Standardizer};
use crate::error::{KrvError, Result};
use crate::kernels::{design_matrix, expand_columns, KernelSpec};
use crate::neighbors::KrvModel;
use crate::sbl::{train_ensemble, Likelihood, SblConfig, SblEnsemble, SblModel};

const MAGIC: &str = "krv-model";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierKind {
    /// Relevance vector machine (binary or one-vs-rest).
    Rvm {
        kernel: KernelSpec,
        anchors: RowMatrix,
        ensemble: SblEnsemble,
    },
    Krv(KrvModel),
}

/// A trained classifier operating on raw (unscaled) attribute rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub class_names: Vec<String>,
    pub schema: Option<Schema>,
    pub standardizer: Standardizer,
    pub kind: ClassifierKind,
}

impl Classifier {
    pub fn train_rvm(
        train: &Dataset,
        kernel: &KernelSpec,
        likelihood: Likelihood,
        scaling: Scaling,
        cfg: &SblConfig,
    ) -> Result<Self> {
        let (std_train, standardizer) = crate::data::rescale(train, scaling);
        let h = design_matrix(kernel, std_train.instances(), std_train.instances())?;
        let ensemble = train_ensemble(
            h.values(),
            std_train.labels(),
            std_train.n_classes(),
            likelihood,
            cfg,
        )?;
        Ok(Classifier {
            class_names: train.class_names().to_vec(),
            schema: train.schema().cloned(),
            standardizer,
            kind: ClassifierKind::Rvm {
                kernel: *kernel,
                anchors: std_train.instances().clone(),
                ensemble,
            },
        })
    }

    pub fn train_krv(
        train: &Dataset,
        kernel: &KernelSpec,
        k: usize,
        scaling: Scaling,
        cfg: &SblConfig,
    ) -> Result<Self> {
        let (std_train, standardizer) = crate::data::rescale(train, scaling);
        let model = crate::neighbors::krv_train(&std_train, kernel, k, cfg)?;
        Ok(Classifier {
            class_names: train.class_names().to_vec(),
            schema: train.schema().cloned(),
            standardizer,
            kind: ClassifierKind::Krv(model),
        })
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    fn prepare(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(KrvError::DimensionMismatch {
                expected: self.dim(),
                found: row.len(),
            });
        }
        let mut z = row.to_vec();
        self.standardizer.apply_row(&mut z);
        Ok(z)
    }

    /// Per-class scores: one-vs-rest outputs for the RVM, vote fractions
    /// among the k nearest rows for k-RV.
    pub fn scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        let z = self.prepare(row)?;
        match &self.kind {
            ClassifierKind::Rvm {
                kernel,
                anchors,
                ensemble,
            } => {
                let cols: Vec<usize> = (0..=anchors.n_rows()).collect();
                let phi = expand_columns(kernel, &z, anchors, &cols)?;
                ensemble.scores(&phi)
            }
            ClassifierKind::Krv(m) => {
                let order = m.neighbor_order(&z)?;
                let mut votes = vec![0.0; m.n_classes];
                for &i in order.iter().take(m.k) {
                    votes[m.train_labels[i]] += 1.0;
                }
                Ok(votes.into_iter().map(|v| v / m.k as f64).collect())
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        let z = self.prepare(row)?;
        match &self.kind {
            ClassifierKind::Rvm {
                kernel,
                anchors,
                ensemble,
            } => {
                let cols: Vec<usize> = (0..=anchors.n_rows()).collect();
                let phi = expand_columns(kernel, &z, anchors, &cols)?;
                ensemble.predict(&phi)
            }
            ClassifierKind::Krv(m) => m.predict(&z),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| KrvError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| KrvError::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let (kind, kernel, anchors) = match &self.kind {
            ClassifierKind::Rvm {
                kernel, anchors, ..
            } => ("rvm", kernel, anchors),
            ClassifierKind::Krv(m) => ("krv", &m.kernel, &m.anchors),
        };
        let _ = writeln!(out, "kind {kind}");
        match kernel {
            KernelSpec::Gaussian { width } => writeln!(out, "kernel gaussian {width:?}"),
            KernelSpec::Polynomial { order } => writeln!(out, "kernel polynomial {order}"),
        }
        .ok();
        let _ = writeln!(out, "classes {}", self.class_names.len());
        for c in &self.class_names {
            let _ = writeln!(out, "class {c}");
        }
        let _ = writeln!(out, "standardizer {}", self.standardizer.dim());
        let _ = writeln!(out, "means {}", floats(&self.standardizer.means));
        let _ = writeln!(out, "stds {}", floats(&self.standardizer.stds));
        match &self.schema {
            None => out.push_str("schema none\n"),
            Some(s) => {
                let _ = writeln!(out, "schema {}", s.columns.len());
                for c in &s.columns {
                    let _ = writeln!(out, "column {} {}", c.kind, c.levels.len());
                    for l in &c.levels {
                        let _ = writeln!(out, "level {l}");
                    }
                }
            }
        }
        write_rows(&mut out, "anchors", anchors);
        match &self.kind {
            ClassifierKind::Rvm { ensemble, .. } => {
                let _ = writeln!(out, "ensemble {}", ensemble.models.len());
                for (class, m) in &ensemble.models {
                    write_sbl(&mut out, *class, m);
                }
            }
            ClassifierKind::Krv(m) => {
                let _ = writeln!(out, "k {}", m.k);
                let _ = writeln!(out, "retained {}", ints(&m.retained_dims));
                let _ = writeln!(out, "weights {}", floats(&m.sparse_weights));
                let _ = writeln!(out, "labels {}", ints(&m.train_labels));
                write_rows(&mut out, "features", &m.train_features);
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut p = Parser::new(text);
        let head = p.line("krv-model")?;
        let version: u32 = parse_one(&head, "version")?;
        if version != VERSION {
            return Err(fmt_err(format!("unsupported version {version}")));
        }
        let kind = p.rest("kind")?;
        let kernel_tokens = p.line("kernel")?;
        let kernel = match kernel_tokens.as_slice() {
            ["gaussian", w] => KernelSpec::gaussian(parse_tok(w)?)?,
            ["polynomial", o] => KernelSpec::polynomial(parse_tok(o)?)?,
            _ => return Err(fmt_err("bad kernel line")),
        };
        let n_classes: usize = parse_one(&p.line("classes")?, "classes")?;
        let class_names = (0..n_classes)
            .map(|_| p.rest("class").map(str::to_string))
            .collect::<Result<Vec<_>>>()?;
        let d: usize = parse_one(&p.line("standardizer")?, "standardizer")?;
        let means = parse_floats(&p.line("means")?)?;
        let stds = parse_floats(&p.line("stds")?)?;
        if means.len() != d || stds.len() != d {
            return Err(fmt_err("standardizer length mismatch"));
        }
        let schema_tok = p.line("schema")?;
        let schema = match schema_tok.as_slice() {
            ["none"] => None,
            [n] => {
                let n: usize = parse_tok(n)?;
                let mut columns = Vec::with_capacity(n);
                for _ in 0..n {
                    let col = p.line("column")?;
                    let [kind, levels] = col.as_slice() else {
                        return Err(fmt_err("bad column line"));
                    };
                    let kind = match *kind {
                        "real" => AttributeKind::Real,
                        "integer" => AttributeKind::Integer,
                        "nominal" => AttributeKind::Nominal,
                        other => return Err(fmt_err(format!("unknown column kind {other}"))),
                    };
                    let n_levels: usize = parse_tok(levels)?;
                    let levels = (0..n_levels)
                        .map(|_| p.rest("level").map(str::to_string))
                        .collect::<Result<Vec<_>>>()?;
                    columns.push(RawColumn { kind, levels });
                }
                Some(Schema { columns })
            }
            _ => return Err(fmt_err("bad schema line")),
        };
        let anchors = read_rows(&mut p, "anchors")?;
        if anchors.n_cols() != d {
            return Err(fmt_err("anchor dimension mismatch"));
        }
        let kind = match kind {
            "rvm" => {
                let n_models: usize = parse_one(&p.line("ensemble")?, "ensemble")?;
                let models = (0..n_models)
                    .map(|_| read_sbl(&mut p))
                    .collect::<Result<Vec<_>>>()?;
                if models.is_empty() {
                    return Err(fmt_err("empty ensemble"));
                }
                ClassifierKind::Rvm {
                    kernel,
                    anchors,
                    ensemble: SblEnsemble { n_classes, models },
                }
            }
            "krv" => {
                let k: usize = parse_one(&p.line("k")?, "k")?;
                let retained_dims = parse_ints(&p.line("retained")?)?;
                let sparse_weights = parse_floats(&p.line("weights")?)?;
                let train_labels = parse_ints(&p.line("labels")?)?;
                let train_features = read_rows(&mut p, "features")?;
                if retained_dims.len() != sparse_weights.len()
                    || train_features.n_cols() != retained_dims.len()
                    || train_features.n_rows() != train_labels.len()
                {
                    return Err(fmt_err("k-RV section shapes disagree"));
                }
                ClassifierKind::Krv(KrvModel {
                    kernel,
                    anchors,
                    retained_dims,
                    sparse_weights,
                    train_features,
                    train_labels,
                    n_classes,
                    k,
                })
            }
            other => return Err(fmt_err(format!("unknown model kind {other}"))),
        };
        p.line("end")?;
        Ok(Classifier {
            class_names,
            schema,
            standardizer: Standardizer { means, stds },
            kind,
        })
    }
}

fn fmt_err(msg: impl Into<String>) -> KrvError {
    KrvError::ModelFormat(msg.into())
}

fn floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn ints(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn write_rows(out: &mut String, tag: &str, m: &RowMatrix) {
    let _ = writeln!(out, "{tag} {} {}", m.n_rows(), m.n_cols());
    for r in m.rows() {
        let _ = writeln!(out, "row {}", floats(r));
    }
}

fn read_rows(p: &mut Parser<'_>, tag: &str) -> Result<RowMatrix> {
    let head = p.line(tag)?;
    let [n, d] = head.as_slice() else {
        return Err(fmt_err(format!("bad {tag} header")));
    };
    let (n, d): (usize, usize) = (parse_tok(n)?, parse_tok(d)?);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let row = parse_floats(&p.line("row")?)?;
        if row.len() != d {
            return Err(fmt_err(format!(
                "{tag} row has {} values, expected {d}",
                row.len()
            )));
        }
        data.extend(row);
    }
    RowMatrix::new(data, n, d)
}

fn write_sbl(out: &mut String, class: usize, m: &SblModel) {
    let noise = m.noise_var.map_or("none".to_string(), |v| format!("{v:?}"));
    let _ = writeln!(
        out,
        "model {class} {} {} {noise} {}",
        m.likelihood,
        m.active.len(),
        u8::from(m.converged)
    );
    let _ = writeln!(out, "active {}", ints(&m.active));
    let _ = writeln!(out, "weights {}", floats(m.weights.as_slice()));
    let _ = writeln!(out, "alphas {}", floats(m.alphas.as_slice()));
    // row-major; the matrix is symmetric up to round-off
    let n = m.covariance.nrows();
    let cov: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| m.covariance[(i, j)])
        .collect();
    let _ = writeln!(out, "covariance {}", floats(&cov));
}

fn read_sbl(p: &mut Parser<'_>) -> Result<(usize, SblModel)> {
    let head = p.line("model")?;
    let [class, likelihood, n, noise, converged] = head.as_slice() else {
        return Err(fmt_err("bad model header"));
    };
    let class: usize = parse_tok(class)?;
    let likelihood: Likelihood = likelihood.parse().map_err(|_| fmt_err("bad likelihood"))?;
    let n: usize = parse_tok(n)?;
    let noise_var = match *noise {
        "none" => None,
        v => Some(parse_tok::<f64>(v)?),
    };
    let active = parse_ints(&p.line("active")?)?;
    let weights = parse_floats(&p.line("weights")?)?;
    let alphas = parse_floats(&p.line("alphas")?)?;
    let cov = parse_floats(&p.line("covariance")?)?;
    if active.len() != n || weights.len() != n || alphas.len() != n || cov.len() != n * n {
        return Err(fmt_err("model section shapes disagree"));
    }
    Ok((
        class,
        SblModel {
            active,
            weights: DVector::from_vec(weights),
            alphas: DVector::from_vec(alphas),
            covariance: DMatrix::from_row_slice(n, n, &cov),
            likelihood,
            noise_var,
            history: Vec::new(),
            converged: *converged == "1",
        },
    ))
}

fn parse_tok<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| fmt_err(format!("cannot parse {s:?}")))
}

fn parse_one<T: std::str::FromStr>(tokens: &[&str], what: &str) -> Result<T> {
    match tokens {
        [t] => parse_tok(t),
        _ => Err(fmt_err(format!("expected one value for {what}"))),
    }
}

fn parse_floats(tokens: &[&str]) -> Result<Vec<f64>> {
    tokens.iter().map(|t| parse_tok(t)).collect()
}

fn parse_ints(tokens: &[&str]) -> Result<Vec<usize>> {
    tokens.iter().map(|t| parse_tok(t)).collect()
}

struct Parser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            lines: text.lines().enumerate(),
        }
    }

    /// Remainder of the next line after `tag ` (verbatim).
    fn rest(&mut self, tag: &str) -> Result<&'a str> {
        let (no, line) = self
            .lines
            .next()
            .ok_or_else(|| fmt_err(format!("unexpected end of file, expected {tag}")))?;
        if line == tag {
            return Ok("");
        }
        line.strip_prefix(tag)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| fmt_err(format!("line {}: expected {tag}", no + 1)))
    }

    fn line(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        Ok(self.rest(tag)?.split_whitespace().collect())
    }
}
