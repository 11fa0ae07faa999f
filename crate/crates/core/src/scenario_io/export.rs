//! Trajectory export as CSV tables and SVG path plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::Layout;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Svg,
}

impl ExportFormat {
    /// Format implied by the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "svg" => Some(Self::Svg),
            _ => None,
        }
    }
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn header(l: &Layout) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    let mut agent = |kind: &str, k: usize| {
        for a in &AXES[..l.dim] {
            cols.push(format!("{kind}{}_{a}", k + 1));
        }
        for a in &AXES[..l.dim] {
            cols.push(format!("{kind}{}_v{a}", k + 1));
        }
    };
    for j in 0..l.dogs {
        agent("dog", j);
    }
    for i in 0..l.sheep {
        agent("sheep", i);
    }
    for j in 0..l.dogs {
        for a in &AXES[..l.dim] {
            cols.push(format!("u{}_{a}", j + 1));
        }
    }
    cols
}

fn check_exportable(traj: &Trajectory) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::Validation(
            "cannot export an empty trajectory".into(),
        ));
    }
    let l = &traj.layout;
    for k in 0..traj.len() {
        if traj.states.get(k).map(Vec::len) != Some(l.state_len()) {
            return Err(Error::DimensionMismatch(format!(
                "state at node {k} has the wrong length"
            )));
        }
        if traj.controls.get(k).map(Vec::len) != Some(l.control_len()) {
            return Err(Error::MissingControls { node: k });
        }
    }
    Ok(())
}

/// CSV text: one row per node with time, packed state and controls, every
/// number written with 17 significant digits.
pub fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    check_exportable(traj)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Validation(format!("csv encoding failed: {e}"));
    w.write_record(header(&traj.layout)).map_err(io)?;
    for k in 0..traj.len() {
        let row = std::iter::once(traj.times[k])
            .chain(traj.states[k].iter().copied())
            .chain(traj.controls[k].iter().copied())
            .map(|v| format!("{v:.16e}"));
        w.write_record(row).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

/// Reads a CSV written by [`trajectory_csv`] for agents laid out as `layout`.
pub fn read_trajectory_csv(path: impl AsRef<Path>, layout: Layout) -> Result<Trajectory> {
    let path = path.as_ref();
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => bad(format!("{other:?}")),
    })?;
    let expect = header(&layout);
    let got: Vec<String> = rdr
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != expect {
        return Err(bad(format!(
            "header has {} columns, expected {} ({} ...)",
            got.len(),
            expect.len(),
            expect[..expect.len().min(4)].join(",")
        )));
    }
    let ns = layout.state_len();
    let mut traj = Trajectory {
        layout,
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        costates: None,
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(c, s)| {
                s.trim().parse().map_err(|_| {
                    bad(format!(
                        "row {}, column {}: not a number: {s:?}",
                        row + 2,
                        c + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        traj.times.push(vals[0]);
        traj.states.push(vals[1..1 + ns].to_vec());
        traj.controls.push(vals[1 + ns..].to_vec());
    }
    Ok(traj)
}

const SVG_SIZE: f64 = 600.0;
const SVG_PAD: f64 = 30.0;

/// SVG plot of the agents' planar paths with the origin marked, a circle
/// at each start and a square at each end.
pub fn trajectory_svg(traj: &Trajectory) -> Result<String> {
    check_exportable(traj)?;
    let l = traj.layout;
    let mut agents: Vec<(&str, usize)> = (0..l.dogs).map(|j| ("dog", l.dog_pos(j))).collect();
    agents.extend((0..l.sheep).map(|i| ("sheep", l.sheep_pos(i))));

    let (mut lo, mut hi) = ([0.0f64; 2], [0.0f64; 2]);
    for x in &traj.states {
        for &(_, p) in &agents {
            for c in 0..2 {
                lo[c] = lo[c].min(x[p + c]);
                hi[c] = hi[c].max(x[p + c]);
            }
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let scale = (SVG_SIZE - 2.0 * SVG_PAD) / span;
    let px = |x: f64| SVG_PAD + (x - lo[0]) * scale;
    let py = |y: f64| SVG_SIZE - SVG_PAD - (y - lo[1]) * scale;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#
    );
    s.push_str(
        "<style>.dog{stroke:#c0392b;fill:none;stroke-width:2}\
         .sheep{stroke:#2471a3;fill:none;stroke-width:2}\
         .origin{fill:#000}.start{fill:#fff;stroke:#000}.end{fill:#000}</style>\n",
    );
    let _ = writeln!(
        s,
        r#"<circle class="origin" cx="{:.3}" cy="{:.3}" r="4"/>"#,
        px(0.0),
        py(0.0)
    );
    for &(kind, p) in &agents {
        let mut d = String::new();
        for (k, x) in traj.states.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.3} {:.3}",
                if k == 0 { "M" } else { " L" },
                px(x[p]),
                py(x[p + 1])
            );
        }
        let _ = writeln!(s, r#"<path class="{kind}" d="{d}"/>"#);
    }
    let last = traj.len() - 1;
    for &(_, p) in &agents {
        let (x0, y0) = (px(traj.states[0][p]), py(traj.states[0][p + 1]));
        let (x1, y1) = (px(traj.states[last][p]), py(traj.states[last][p + 1]));
        let _ = writeln!(
            s,
            r#"<circle class="start" cx="{x0:.3}" cy="{y0:.3}" r="5"/>"#
        );
        let _ = writeln!(
            s,
            r#"<rect class="end" x="{:.3}" y="{:.3}" width="8" height="8"/>"#,
            x1 - 4.0,
            y1 - 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn export_trajectory(
    traj: &Trajectory,
    path: impl AsRef<Path>,
    format: ExportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ExportFormat::Csv => trajectory_csv(traj)?,
        ExportFormat::Svg => trajectory_svg(traj)?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
