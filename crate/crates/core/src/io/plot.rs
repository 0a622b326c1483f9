//! Long-format plot data: `path_id,time,value`.

use std::io::Write;
use std::str::FromStr;

use crate::ensemble::EnsembleOutcome;
use crate::error::{Error, Result};
use crate::io::report::format_number;
use crate::strategy::FloorCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Entropy of market weights along each scored path.
    EntropyCurves,
    /// Relative log-wealth of the switching strategy along each path.
    RelWealth,
    /// Pointwise entropy minimum across paths.
    FloorCurve,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy_curves" => Ok(PlotKind::EntropyCurves),
            "rel_wealth" => Ok(PlotKind::RelWealth),
            "floor_curve" => Ok(PlotKind::FloorCurve),
            other => Err(Error::UnknownPlotKind(other.to_string())),
        }
    }
}

pub fn write_floor_curve<W: Write>(curve: &FloorCurve, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["path_id", "time", "value"])?;
    for (t, v) in curve.times.iter().zip(&curve.values) {
        w.write_record(["ensemble".to_string(), format_number(*t), format_number(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_plot_data<W: Write>(outcome: &EnsembleOutcome, kind: PlotKind, writer: W) -> Result<()> {
    if outcome.records.is_empty() {
        return Err(Error::InvalidParameter("no path records to plot".into()));
    }
    if kind == PlotKind::FloorCurve {
        return write_floor_curve(&outcome.floor_curve()?, writer);
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["path_id", "time", "value"])?;
    for r in &outcome.records {
        let series = match kind {
            PlotKind::EntropyCurves => &r.entropy,
            PlotKind::RelWealth => &r.rel,
            PlotKind::FloorCurve => unreachable!("handled above"),
        };
        let id = r.path_id.to_string();
        for (t, v) in outcome.times.iter().zip(series) {
            w.write_record([id.clone(), format_number(*t), format_number(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}
