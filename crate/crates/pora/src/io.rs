//! File formats.
//!
//! Grid CSV: a header line
//! `rows,cols,cell_size,origin_x,origin_y,origin_heading,t`, one line with
//! those values, then `rows` lines of `cols` probabilities (row-major, row 0
//! first). Grid JSON carries the same fields with a flat `values` array. Both
//! print floats in shortest round-trip form, so reading back is bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pora_core::grid::{GridSpec, OccupancyGrid};
use pora_core::sim::{BatchSummary, EpisodeReport, ScenarioSpec, TrajectoryRow};
use pora_core::types::{PlannedTrajectory, Pose2, TrajectorySample, Velocity2};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

const GRID_HEADER: [&str; 7] = [
    "rows",
    "cols",
    "cell_size",
    "origin_x",
    "origin_y",
    "origin_heading",
    "t",
];
const PLAN_HEADER: [&str; 6] = ["t", "x", "y", "heading", "vx", "vy"];

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: unsupported schema_version {found} (expected {SCENARIO_SCHEMA_VERSION})")]
    Schema { path: PathBuf, found: u32 },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        source: pora_core::Error,
    },
    #[error("{path}: unknown extension (expected .csv or .json)")]
    Extension { path: PathBuf },
}

pub type IoResult<T> = Result<T, IoError>;

fn read(path: &Path) -> IoResult<String> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_owned(),
        source,
    })
}

pub fn write(path: &Path, contents: &str) -> IoResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Write {
            path: dir.to_owned(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| IoError::Write {
        path: path.to_owned(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_owned(),
        line,
        msg: msg.into(),
    }
}

fn csv_records(path: &Path, text: &str) -> IoResult<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    rec: &csv::StringRecord,
    i: usize,
    name: &str,
) -> IoResult<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| parse_err(path, line, format!("missing column {name}")))?;
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("bad {name}: {raw:?}")))
}

fn csv_line<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: std::fmt::Display,
{
    let mut s = fields
        .into_iter()
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    s
}

pub fn grid_to_csv(g: &OccupancyGrid) -> String {
    let s = g.spec();
    let mut out = csv_line(GRID_HEADER);
    out.push_str(&csv_line([
        s.rows.to_string(),
        s.cols.to_string(),
        s.cell_size.to_string(),
        s.origin.x.to_string(),
        s.origin.y.to_string(),
        s.origin.heading.to_string(),
        g.t().to_string(),
    ]));
    for row in g.values().chunks(s.cols) {
        out.push_str(&csv_line(row));
    }
    out
}

pub fn grid_from_csv(path: &Path, text: &str) -> IoResult<OccupancyGrid> {
    let recs = csv_records(path, text)?;
    let Some((hl, header)) = recs.first() else {
        return Err(parse_err(path, 1, "empty grid file"));
    };
    if header.iter().ne(GRID_HEADER) {
        return Err(parse_err(path, *hl, "expected grid header"));
    }
    let (ml, meta) = recs
        .get(1)
        .ok_or_else(|| parse_err(path, hl + 1, "missing grid metadata"))?;
    let rows: usize = field(path, *ml, meta, 0, "rows")?;
    let cols: usize = field(path, *ml, meta, 1, "cols")?;
    let cell: f64 = field(path, *ml, meta, 2, "cell_size")?;
    let ox: f64 = field(path, *ml, meta, 3, "origin_x")?;
    let oy: f64 = field(path, *ml, meta, 4, "origin_y")?;
    let oh: f64 = field(path, *ml, meta, 5, "origin_heading")?;
    let t: f64 = field(path, *ml, meta, 6, "t")?;
    let body = &recs[2..];
    if body.len() != rows {
        return Err(parse_err(
            path,
            *ml,
            format!("expected {rows} value rows, found {}", body.len()),
        ));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (line, rec) in body {
        if rec.len() != cols {
            return Err(parse_err(
                path,
                *line,
                format!("expected {cols} values, found {}", rec.len()),
            ));
        }
        for i in 0..cols {
            values.push(field::<f64>(path, *line, rec, i, "probability")?);
        }
    }
    let invalid = |source| IoError::Invalid {
        path: path.to_owned(),
        source,
    };
    let spec = GridSpec::new(Pose2::new(ox, oy, oh), cell, rows, cols).map_err(invalid)?;
    OccupancyGrid::new(spec, t, values).map_err(invalid)
}

#[derive(Debug, Serialize, Deserialize)]
struct GridJson {
    rows: usize,
    cols: usize,
    cell_size: f64,
    origin: Pose2,
    t: f64,
    values: Vec<f64>,
}

pub fn grid_to_json(g: &OccupancyGrid) -> String {
    let s = g.spec();
    let doc = GridJson {
        rows: s.rows,
        cols: s.cols,
        cell_size: s.cell_size,
        origin: s.origin,
        t: g.t(),
        values: g.values().to_vec(),
    };
    serde_json::to_string(&doc).expect("grid serializes") + "\n"
}

pub fn grid_from_json(path: &Path, text: &str) -> IoResult<OccupancyGrid> {
    let doc: GridJson = serde_json::from_str(text).map_err(|source| IoError::Json {
        path: path.to_owned(),
        source,
    })?;
    let invalid = |source| IoError::Invalid {
        path: path.to_owned(),
        source,
    };
    let spec = GridSpec::new(doc.origin, doc.cell_size, doc.rows, doc.cols).map_err(invalid)?;
    OccupancyGrid::new(spec, doc.t, doc.values).map_err(invalid)
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str())
}

pub fn load_grid(path: &Path) -> IoResult<OccupancyGrid> {
    let text = read(path)?;
    match extension(path) {
        Some("csv") => grid_from_csv(path, &text),
        Some("json") => grid_from_json(path, &text),
        _ => Err(IoError::Extension {
            path: path.to_owned(),
        }),
    }
}

pub fn save_grid(path: &Path, g: &OccupancyGrid) -> IoResult<()> {
    match extension(path) {
        Some("csv") => write(path, &grid_to_csv(g)),
        Some("json") => write(path, &grid_to_json(g)),
        _ => Err(IoError::Extension {
            path: path.to_owned(),
        }),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
}

pub fn scenario_to_json(spec: &ScenarioSpec) -> String {
    let doc = ScenarioFile {
        schema_version: SCENARIO_SCHEMA_VERSION,
        scenario: spec.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("scenario serializes") + "\n"
}

pub fn scenario_from_json(path: &Path, text: &str) -> IoResult<ScenarioSpec> {
    #[derive(Deserialize)]
    struct Version {
        schema_version: u32,
    }
    let json_err = |source| IoError::Json {
        path: path.to_owned(),
        source,
    };
    let v: Version = serde_json::from_str(text).map_err(json_err)?;
    if v.schema_version != SCENARIO_SCHEMA_VERSION {
        return Err(IoError::Schema {
            path: path.to_owned(),
            found: v.schema_version,
        });
    }
    let doc: ScenarioFile = serde_json::from_str(text).map_err(json_err)?;
    doc.scenario.validate().map_err(|source| IoError::Invalid {
        path: path.to_owned(),
        source,
    })?;
    Ok(doc.scenario)
}

pub fn load_scenario(path: &Path) -> IoResult<ScenarioSpec> {
    scenario_from_json(path, &read(path)?)
}

/// Plan CSV: header `t,x,y,heading,vx,vy`, one sample per line.
pub fn plan_to_csv(plan: &PlannedTrajectory) -> String {
    let mut out = csv_line(PLAN_HEADER);
    for s in plan.samples() {
        out.push_str(&csv_line([
            s.t,
            s.pose.x,
            s.pose.y,
            s.pose.heading,
            s.velocity.vx,
            s.velocity.vy,
        ]));
    }
    out
}

pub fn plan_from_csv(path: &Path, text: &str) -> IoResult<PlannedTrajectory> {
    let recs = csv_records(path, text)?;
    let Some((hl, header)) = recs.first() else {
        return Err(parse_err(path, 1, "empty plan file"));
    };
    if header.iter().ne(PLAN_HEADER) {
        return Err(parse_err(path, *hl, "expected header t,x,y,heading,vx,vy"));
    }
    let mut samples = Vec::new();
    for (line, rec) in &recs[1..] {
        let f = |i: usize| field::<f64>(path, *line, rec, i, PLAN_HEADER[i]);
        samples.push(TrajectorySample {
            t: f(0)?,
            pose: Pose2::new(f(1)?, f(2)?, f(3)?),
            velocity: Velocity2::new(f(4)?, f(5)?),
        });
    }
    PlannedTrajectory::new(samples).map_err(|source| IoError::Invalid {
        path: path.to_owned(),
        source,
    })
}

pub fn load_plan(path: &Path) -> IoResult<PlannedTrajectory> {
    plan_from_csv(path, &read(path)?)
}

pub fn trajectory_to_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = csv_line([
        "t", "id", "kind", "x", "y", "heading", "vx", "vy", "ax", "length", "width",
    ]);
    for r in rows {
        out.push_str(&csv_line([
            r.t.to_string(),
            r.id.0.to_string(),
            r.kind.as_str().to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.heading.to_string(),
            r.vx.to_string(),
            r.vy.to_string(),
            r.ax.to_string(),
            r.length.to_string(),
            r.width.to_string(),
        ]));
    }
    out
}

/// `t,value` per line.
pub fn series_to_csv(name: &str, series: &[(f64, f64)]) -> String {
    let mut out = csv_line(["t", name]);
    for (t, v) in series {
        out.push_str(&csv_line([t, v]));
    }
    out
}

pub fn episodes_to_csv(reports: &[EpisodeReport]) -> String {
    let mut out = csv_line([
        "seed",
        "family",
        "metric",
        "outcome",
        "conflicts",
        "collisions",
        "episode_return",
        "travel_time",
        "reached_goal",
    ]);
    for r in reports {
        out.push_str(&csv_line([
            r.seed.to_string(),
            r.family.as_str().to_string(),
            r.metric.as_str().to_string(),
            format!("{:?}", r.outcome).to_lowercase(),
            r.conflicts.to_string(),
            r.collisions.to_string(),
            r.episode_return.to_string(),
            r.travel_time.to_string(),
            r.reached_goal.to_string(),
        ]));
    }
    out
}

pub const SUMMARY_COLUMNS: [&str; 7] = [
    "episodes",
    "crash_episodes",
    "avg_conflicts",
    "collisions_per_100",
    "avg_return",
    "min_return",
    "avg_travel_time",
];

pub fn summary_fields(s: &BatchSummary) -> [String; 7] {
    [
        s.episodes.to_string(),
        s.crash_episodes.to_string(),
        s.avg_conflicts.to_string(),
        s.collisions_per_100.to_string(),
        s.avg_return.to_string(),
        s.min_return.to_string(),
        s.avg_travel_time.to_string(),
    ]
}

pub fn summary_to_csv(s: &BatchSummary) -> String {
    csv_line(SUMMARY_COLUMNS) + &csv_line(summary_fields(s))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}
