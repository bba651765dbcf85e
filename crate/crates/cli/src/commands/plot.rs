use std::path::PathBuf;

use tpg_core::metrics::AggregateTable;

use super::{EvalMeta, EVAL_META};
use crate::error::{io_err, CliError, CliResult};
use crate::lock::DirLock;
use crate::render::{curve_svg, write_text};

#[derive(Debug, Clone)]
pub struct PlotArgs {
    /// An `eval` output directory, or a single table CSV.
    pub input: PathBuf,
    pub out: PathBuf,
    /// Training horizon marker; read from `eval_meta.json` when absent.
    pub marker: Option<usize>,
}

/// One `<metric>.svg` per metric in the input. Prefers `curves.csv` (every
/// step) over `table.csv` when given a directory.
pub fn plot(args: &PlotArgs) -> CliResult<Vec<PathBuf>> {
    let (csv_path, meta_dir) = if args.input.is_dir() {
        let curves = args.input.join("curves.csv");
        let path = if curves.is_file() { curves } else { args.input.join("table.csv") };
        (path, args.input.clone())
    } else {
        let dir = args.input.parent().map(PathBuf::from).unwrap_or_default();
        (args.input.clone(), dir)
    };
    let table = AggregateTable::read_csv(&csv_path)?;
    if table.is_empty() {
        return Err(CliError::Usage(format!("{} has no rows to plot", csv_path.display())));
    }
    let marker = match args.marker {
        Some(t) => t,
        None => {
            let meta_path = meta_dir.join(EVAL_META);
            let text = std::fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
            let meta: EvalMeta = serde_json::from_str(&text).map_err(|e| {
                CliError::Core(tpg_core::Error::Parse {
                    path: meta_path.clone(),
                    msg: e.to_string(),
                })
            })?;
            meta.train_horizon
        }
    };
    let svgs = table
        .metrics()
        .into_iter()
        .map(|m| Ok((m, curve_svg(&table, m, marker)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let _lock = DirLock::acquire(&args.out)?;
    let mut written = Vec::with_capacity(svgs.len());
    for (m, svg) in svgs {
        let path = args.out.join(format!("{}.svg", m.name()));
        write_text(&path, &svg)?;
        written.push(path);
    }
    Ok(written)
}
