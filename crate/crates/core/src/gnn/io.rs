use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::GnnModel;
use super::{AggregatorSet, Architecture, GnnConfig, LossKind};
use crate::error::{Error, Result};
use crate::rng::stream;

/// First line of a saved model.
pub const MODEL_FORMAT_TAG: &str = "netcausal-gnn v1";

fn arch_name(a: Architecture) -> &'static str {
    match a {
        Architecture::Gcn => "gcn",
        Architecture::SumMlp => "sum_mlp",
        Architecture::Pna => "pna",
    }
}

fn agg_name(a: AggregatorSet) -> &'static str {
    match a {
        AggregatorSet::Basic => "basic",
        AggregatorSet::Scaled => "scaled",
    }
}

fn loss_name(l: LossKind) -> &'static str {
    match l {
        LossKind::LeastSquares => "least_squares",
        LossKind::Logistic => "logistic",
    }
}

/// Writes a model as a header of `key value` lines followed by one parameter
/// per line. Floats use the shortest representation that round-trips.
pub fn write_model<W: Write>(model: &GnnModel, mut w: W) -> Result<()> {
    let c = &model.config;
    let mut m = model.clone();
    let params = m.params_mut();
    let count: usize = params.iter().map(|p| p.len()).sum();
    writeln!(w, "{MODEL_FORMAT_TAG}")?;
    writeln!(w, "architecture {}", arch_name(c.architecture))?;
    writeln!(w, "aggregators {}", agg_name(c.aggregators))?;
    writeln!(w, "depth {}", c.depth)?;
    writeln!(w, "loss {}", loss_name(c.loss))?;
    writeln!(w, "input_width {}", model.input_width)?;
    writeln!(w, "first_width {}", c.first_width)?;
    writeln!(w, "hidden_width {}", c.hidden_width)?;
    writeln!(w, "delta {}", model.delta)?;
    writeln!(w, "output_shift {}", model.output_shift)?;
    writeln!(w, "output_scale {}", model.output_scale)?;
    writeln!(w, "params {count}")?;
    for p in params {
        for v in &p.data {
            writeln!(w, "{v}")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_model(model: &GnnModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?.trim().to_string()),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn field(&mut self, key: &str) -> Result<String> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_string()),
            _ => Err(self.err(format!("expected `{key} <value>`, found `{l}`"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse()
            .map_err(|_| self.err(format!("invalid value `{v}` for {key}")))
    }
}

pub fn read_model<R: Read>(r: R) -> Result<GnnModel> {
    let mut lines = Lines {
        inner: BufReader::new(r).lines(),
        line: 0,
    };
    let tag = lines.next()?;
    if tag != MODEL_FORMAT_TAG {
        return Err(lines.err(format!("unknown model format `{tag}`")));
    }
    let architecture = match lines.field("architecture")?.as_str() {
        "gcn" => Architecture::Gcn,
        "sum_mlp" => Architecture::SumMlp,
        "pna" => Architecture::Pna,
        other => return Err(lines.err(format!("unknown architecture `{other}`"))),
    };
    let aggregators = match lines.field("aggregators")?.as_str() {
        "basic" => AggregatorSet::Basic,
        "scaled" => AggregatorSet::Scaled,
        other => return Err(lines.err(format!("unknown aggregator set `{other}`"))),
    };
    let depth = lines.parsed("depth")?;
    let loss = match lines.field("loss")?.as_str() {
        "least_squares" => LossKind::LeastSquares,
        "logistic" => LossKind::Logistic,
        other => return Err(lines.err(format!("unknown loss `{other}`"))),
    };
    let input_width = lines.parsed("input_width")?;
    let first_width = lines.parsed("first_width")?;
    let hidden_width = lines.parsed("hidden_width")?;
    let delta = lines.parsed("delta")?;
    let output_shift = lines.parsed("output_shift")?;
    let output_scale = lines.parsed("output_scale")?;
    let count: usize = lines.parsed("params")?;

    let config = GnnConfig {
        depth,
        architecture,
        first_width,
        hidden_width,
        aggregators,
        loss,
        ..GnnConfig::default()
    };
    let mut model =
        GnnModel::new(config, input_width, delta, &mut stream(0, 0)).map_err(|e| lines.err(e.to_string()))?;
    if model.param_count() != count {
        return Err(lines.err(format!(
            "architecture has {} parameters, file declares {count}",
            model.param_count()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let l = lines.next()?;
        values.push(
            l.parse::<f64>()
                .map_err(|_| lines.err(format!("invalid parameter `{l}`")))?,
        );
    }
    let mut it = values.into_iter();
    for p in model.params_mut() {
        for v in p.data.iter_mut() {
            *v = it.next().expect("count checked");
        }
    }
    model.output_shift = output_shift;
    model.output_scale = output_scale;
    Ok(model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GnnModel> {
    read_model(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Matrix;
    use crate::gnn::forward_gnn;
    use crate::graph::Graph;

    #[test]
    fn round_trip_preserves_predictions() {
        let g = Graph::cycle(7);
        let x = Matrix::column(&[0.0, 0.25, 0.5, 0.75, 1.0, 0.5, 0.25]);
        for architecture in [Architecture::Gcn, Architecture::SumMlp, Architecture::Pna] {
            let cfg = GnnConfig {
                architecture,
                depth: 3,
                ..GnnConfig::default()
            };
            let mut model = GnnModel::for_graph(cfg, &g, 1, &mut stream(9, 1)).unwrap();
            model.output_shift = 0.1;
            model.output_scale = 3.0;
            let mut buf = Vec::new();
            write_model(&model, &mut buf).unwrap();
            let back = read_model(buf.as_slice()).unwrap();
            assert_eq!(back, model);
            assert_eq!(
                forward_gnn(&back, &g, &x).unwrap(),
                forward_gnn(&model, &g, &x).unwrap()
            );
        }
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            read_model("other v2\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        let model = GnnModel::new(GnnConfig::default(), 1, 1.0, &mut stream(0, 0)).unwrap();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        assert!(read_model(truncated.as_bytes()).is_err());
        let wrong = text.replace("params ", "params 1");
        assert!(read_model(wrong.as_bytes()).is_err());
    }
}
