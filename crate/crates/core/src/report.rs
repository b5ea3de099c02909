//! CSV writers shared by the command-line tools.

use std::io::Write;

use crate::mesh::DiscreteSpace;
use crate::prox::TraceRow;
use crate::saa::ConsistencyRow;

pub type CsvResult = std::result::Result<(), csv::Error>;

/// Node table `node,x,y,<field>...`; fields are DOF vectors of their spaces,
/// zero-extended to all nodes.
pub fn write_snapshot<W: Write>(w: W, fields: &[(&str, &DiscreteSpace, &[f64])]) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    let Some((_, first, _)) = fields.first() else {
        return out.flush().map_err(Into::into);
    };
    let geometry = first.geometry().clone();
    let mut header = vec!["node".to_string(), "x".into(), "y".into()];
    header.extend(fields.iter().map(|(name, _, _)| name.to_string()));
    out.write_record(&header)?;
    let nodal: Vec<Vec<f64>> = fields.iter().map(|(_, s, v)| s.extend_to_nodes(v)).collect();
    for k in 0..geometry.n_nodes() {
        let [x, y] = geometry.node_coords(k);
        let mut rec = vec![k.to_string(), fmt(x), fmt(y)];
        rec.extend(nodal.iter().map(|v| fmt(v[k])));
        out.write_record(&rec)?;
    }
    out.flush().map_err(Into::into)
}

pub fn write_trace<W: Write>(w: W, trace: &[TraceRow]) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["iteration", "value", "residual", "step"])?;
    for r in trace {
        out.write_record([r.iteration.to_string(), fmt(r.value), fmt(r.residual), fmt(r.step)])?;
    }
    out.flush().map_err(Into::into)
}

pub const CONSISTENCY_HEADER: [&str; 11] = [
    "n",
    "seed",
    "value",
    "value_error",
    "solution_error",
    "fixpoint_residual",
    "iterations",
    "converged",
    "in_vad",
    "wall_time",
    "failure",
];

pub fn write_consistency<W: Write>(w: W, rows: &[ConsistencyRow]) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CONSISTENCY_HEADER)?;
    for r in rows {
        out.write_record([
            r.n.to_string(),
            r.seed.to_string(),
            fmt(r.value),
            fmt(r.value_error),
            fmt(r.solution_error),
            fmt(r.fixpoint_residual),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.in_vad.to_string(),
            fmt(r.wall_time),
            r.failure.clone().unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(Into::into)
}

/// Shortest round-trip representation.
pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{assemble_1d, Grid1D, SpaceKind};

    #[test]
    fn snapshot_extends_to_all_nodes() {
        let s = assemble_1d(Grid1D::new(3).unwrap(), SpaceKind::H01).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &[("y", &s, &[1.0, 2.0, 3.0])]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "node,x,y,y");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].ends_with(",0e0"));
        assert!(lines[2].ends_with(",1e0"));
    }

    #[test]
    fn fmt_round_trips() {
        for v in [0.1, -3.25e-17, 1e300, 7.0] {
            assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
        }
    }
}
