//! Plain-text model files.
//!
//! A file starts with `key=value` lines and continues with `[name]` blocks
//! of comma-separated rows. Blank lines and `#` comments are ignored.
//!
//! ```text
//! family=gmm
//! weight=5.0000000000000000e-1
//! tau=1.0000000000000001e-1
//! tau0=1.0000000000000001e-1
//! [Y]
//! 1.2e0,-3.4e-1
//! ```
//!
//! Probit and logit files carry blocks `X`, `y` (one 0/1 per row), `m0`
//! (one row) and `Q0`; Gaussian targets carry `Q11`, `Q12` and `Q22`.
//! Reals are written with 17 significant digits so files round-trip exactly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use super::models::{GaussianTarget, GmmModel, LogitModel, ModelSpec, ProbitModel};
use crate::linmetric::SpdMatrix;
use crate::{Error, Result};

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_block(w: &mut impl Write, name: &str, m: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "[{name}]")?;
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn write_model(model: &ModelSpec, w: &mut impl Write) -> Result<()> {
    writeln!(w, "family={}", model.family())?;
    match model {
        ModelSpec::Gaussian(t) => {
            write_block(w, "Q11", t.q11().matrix())?;
            write_block(w, "Q12", t.q12())?;
            write_block(w, "Q22", t.q22().matrix())?;
        }
        ModelSpec::Gmm(g) => {
            writeln!(w, "weight={}", fmt(g.weight()))?;
            writeln!(w, "tau={}", fmt(g.tau()))?;
            writeln!(w, "tau0={}", fmt(g.tau0()))?;
            write_block(w, "Y", g.data())?;
        }
        ModelSpec::Probit(m) => {
            write_binary(w, m.design(), m.responses(), m.prior_mean(), m.prior_precision())?
        }
        ModelSpec::Logit(m) => {
            write_binary(w, m.design(), m.responses(), m.prior_mean(), m.prior_precision())?
        }
    }
    Ok(())
}

fn write_binary(
    w: &mut impl Write,
    x: &DMatrix<f64>,
    y: &[bool],
    m0: &DVector<f64>,
    q0: &SpdMatrix,
) -> Result<()> {
    write_block(w, "X", x)?;
    writeln!(w, "[y]")?;
    for &v in y {
        writeln!(w, "{}", u8::from(v))?;
    }
    write_block(w, "m0", &DMatrix::from_row_slice(1, m0.len(), m0.as_slice()))?;
    write_block(w, "Q0", q0.matrix())
}

struct Parsed {
    keys: BTreeMap<String, (usize, String)>,
    blocks: BTreeMap<String, (usize, Vec<Vec<f64>>)>,
}

fn parse(r: impl BufRead) -> Result<Parsed> {
    let mut keys = BTreeMap::new();
    let mut blocks: BTreeMap<String, (usize, Vec<Vec<f64>>)> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if blocks.contains_key(name) {
                return Err(err(format!("duplicate block [{name}]")));
            }
            blocks.insert(name.to_string(), (line_no, Vec::new()));
            current = Some(name.to_string());
            continue;
        }
        match &current {
            None => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected key=value, found `{line}`")))?;
                let k = k.trim().to_string();
                if keys.contains_key(&k) {
                    return Err(err(format!("duplicate key `{k}`")));
                }
                keys.insert(k, (line_no, v.trim().to_string()));
            }
            Some(name) => {
                let row = line
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<f64>()
                            .map_err(|e| err(format!("bad number `{}`: {e}", c.trim())))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let block = blocks.get_mut(name).expect("block registered");
                if let Some(first) = block.1.first() {
                    if first.len() != row.len() {
                        return Err(err(format!(
                            "ragged block [{name}]: {} columns, expected {}",
                            row.len(),
                            first.len()
                        )));
                    }
                }
                block.1.push(row);
            }
        }
    }
    Ok(Parsed { keys, blocks })
}

impl Parsed {
    fn expect_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, (line, _)) in &self.keys {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("unknown key `{k}`"),
                });
            }
        }
        Ok(())
    }

    fn expect_blocks(&self, allowed: &[&str]) -> Result<()> {
        for (k, (line, _)) in &self.blocks {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("unknown block [{k}]"),
                });
            }
        }
        Ok(())
    }

    fn real(&self, key: &str) -> Result<f64> {
        let (line, v) = self.keys.get(key).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing key `{key}`"),
        })?;
        v.parse().map_err(|e| Error::Parse {
            line: *line,
            message: format!("bad value for `{key}`: {e}"),
        })
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let (line, rows) = self.blocks.get(name).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing block [{name}]"),
        })?;
        if rows.is_empty() {
            return Err(Error::Parse {
                line: *line,
                message: format!("empty block [{name}]"),
            });
        }
        let cols = rows[0].len();
        Ok(DMatrix::from_row_iterator(
            rows.len(),
            cols,
            rows.iter().flatten().copied(),
        ))
    }

    fn responses(&self) -> Result<Vec<bool>> {
        let m = self.matrix("y")?;
        let line = self.blocks["y"].0;
        if m.ncols() != 1 {
            return Err(Error::Parse {
                line,
                message: "[y] must have one value per row".into(),
            });
        }
        m.iter()
            .map(|&v| {
                if v == 0.0 {
                    Ok(false)
                } else if v == 1.0 {
                    Ok(true)
                } else {
                    Err(Error::Parse {
                        line,
                        message: format!("response {v} is not 0 or 1"),
                    })
                }
            })
            .collect()
    }

    fn binary_parts(&self) -> Result<(DMatrix<f64>, Vec<bool>, DVector<f64>, SpdMatrix)> {
        self.expect_keys(&["family"])?;
        self.expect_blocks(&["X", "y", "m0", "Q0"])?;
        let m0 = self.matrix("m0")?;
        let m0 = DVector::from_iterator(m0.len(), m0.iter().copied());
        Ok((
            self.matrix("X")?,
            self.responses()?,
            m0,
            SpdMatrix::new(self.matrix("Q0")?)?,
        ))
    }
}

pub fn read_model(r: impl BufRead) -> Result<ModelSpec> {
    let parsed = parse(r)?;
    let family = parsed
        .keys
        .get("family")
        .map(|(_, v)| v.clone())
        .ok_or_else(|| Error::Parse {
            line: 0,
            message: "missing key `family`".into(),
        })?;
    match family.as_str() {
        "gaussian" => {
            parsed.expect_keys(&["family"])?;
            parsed.expect_blocks(&["Q11", "Q12", "Q22"])?;
            Ok(ModelSpec::Gaussian(GaussianTarget::new(
                SpdMatrix::new(parsed.matrix("Q11")?)?,
                parsed.matrix("Q12")?,
                SpdMatrix::new(parsed.matrix("Q22")?)?,
            )?))
        }
        "gmm" => {
            parsed.expect_keys(&["family", "weight", "tau", "tau0"])?;
            parsed.expect_blocks(&["Y"])?;
            Ok(ModelSpec::Gmm(GmmModel::new(
                parsed.real("weight")?,
                parsed.real("tau")?,
                parsed.real("tau0")?,
                parsed.matrix("Y")?,
            )?))
        }
        "probit" => {
            let (x, y, m0, q0) = parsed.binary_parts()?;
            Ok(ModelSpec::Probit(ProbitModel::new(x, y, m0, q0)?))
        }
        "logit" => {
            let (x, y, m0, q0) = parsed.binary_parts()?;
            Ok(ModelSpec::Logit(LogitModel::new(x, y, m0, q0)?))
        }
        other => Err(Error::Parse {
            line: parsed.keys["family"].0,
            message: format!("unknown family `{other}`"),
        }),
    }
}
