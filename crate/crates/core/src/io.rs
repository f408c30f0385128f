//! Reading and writing plans, trial logs, cached analyses and report tables.
//!
//! Trial logs are two delimited-text files joined on
//! `(participant_id, session, trial_index)`; a JSON bundle holding the same
//! trials is accepted too. Angles are in degrees and times in seconds
//! throughout, as the column names say. Floating-point fields are written in
//! the shortest decimal form that parses back to the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{HitpointEffects, HitpointSummary, RaySample, Trial, VelocityProfile};
use crate::error::{Error, Result};
use crate::geometry::{AngularCondition, Direction3, PlacedTrial};
use crate::models::{IdModel, RegressionFit};
use crate::regression::{ConditionMean, TwoPartFit};
use crate::taskgen::TaskPlan;

pub const TRIALS_HEADER: [&str; 16] = [
    "participant_id",
    "session",
    "trial_index",
    "alpha_deg",
    "omega_deg",
    "duration_s",
    "success",
    "start_x",
    "start_y",
    "start_z",
    "target_x",
    "target_y",
    "target_z",
    "hit_x",
    "hit_y",
    "hit_z",
];

pub const SAMPLES_HEADER: [&str; 7] = [
    "participant_id",
    "session",
    "trial_index",
    "t_s",
    "dir_x",
    "dir_y",
    "dir_z",
];

pub const BREAKPOINT_HEADER: [&str; 8] = [
    "L-R",
    "BreakPoint",
    "Left R2",
    "Left Intercept",
    "Left Slope",
    "Right R2",
    "Right Intercept",
    "Right Slope",
];

const BUNDLE_FORMAT: &str = "distal-trials/1";

type Key = (String, u32, u32);

fn key_str(k: &Key) -> String {
    format!("{}/{}/{}", k.0, k.1, k.2)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

/// Writes `contents` to `path` in one go.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn csv_err(file: &str, e: csv::Error) -> Error {
    let reason = match e.position() {
        Some(p) => format!("line {}: {e}", p.line()),
        None => e.to_string(),
    };
    Error::Format {
        file: file.to_string(),
        reason,
    }
}

/// One parsed data row with column lookup by header position.
struct Row<'a> {
    file: &'a str,
    line: u64,
    rec: &'a csv::StringRecord,
    cols: &'a [usize],
    names: &'a [&'a str],
}

impl Row<'_> {
    fn str(&self, i: usize) -> &str {
        self.rec.get(self.cols[i]).unwrap_or("")
    }

    fn malformed(&self, i: usize) -> Error {
        Error::MalformedNumber {
            file: self.file.to_string(),
            line: self.line,
            column: self.names[i].to_string(),
            value: self.str(i).to_string(),
        }
    }

    fn f64(&self, i: usize) -> Result<f64> {
        self.str(i).parse().map_err(|_| self.malformed(i))
    }

    fn u32(&self, i: usize) -> Result<u32> {
        self.str(i).parse().map_err(|_| self.malformed(i))
    }

    fn bool(&self, i: usize) -> Result<bool> {
        match self.str(i) {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(self.malformed(i)),
        }
    }

    fn direction(&self, i: usize) -> Result<Direction3> {
        let (x, y, z) = (self.f64(i)?, self.f64(i + 1)?, self.f64(i + 2)?);
        Direction3::from_unit(x, y, z).map_err(|e| self.format(format!("{}..: {e}", self.names[i])))
    }

    fn key(&self) -> Result<Key> {
        Ok((self.str(0).to_string(), self.u32(1)?, self.u32(2)?))
    }

    fn format(&self, reason: String) -> Error {
        Error::Format {
            file: self.file.to_string(),
            reason: format!("line {}: {reason}", self.line),
        }
    }
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().from_reader(source)
}

/// Column positions for `expected`, or `None` for a source with no content at all.
fn columns<R: Read>(
    file: &str,
    rdr: &mut csv::Reader<R>,
    expected: &[&str],
) -> Result<Option<Vec<usize>>> {
    let headers = rdr.headers().map_err(|e| csv_err(file, e))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(None);
    }
    expected
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| Error::MissingHeader {
                    file: file.to_string(),
                    column: c.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn read_trial_rows<R: Read>(file: &str, source: R) -> Result<BTreeMap<Key, Trial>> {
    let mut rdr = reader(source);
    let mut out = BTreeMap::new();
    let Some(cols) = columns(file, &mut rdr, &TRIALS_HEADER)? else {
        return Ok(out);
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(file, e))?;
        let row = Row {
            file,
            line: rec.position().map_or(0, |p| p.line()),
            rec: &rec,
            cols: &cols,
            names: &TRIALS_HEADER,
        };
        let key = row.key()?;
        let condition = AngularCondition::new(row.f64(3)?, row.f64(4)?)
            .map_err(|e| row.format(e.to_string()))?;
        let placed = PlacedTrial::new(row.direction(7)?, row.direction(10)?, condition);
        let trial = Trial {
            participant_id: key.0.clone(),
            session: key.1,
            trial_index: key.2,
            placed,
            duration_s: row.f64(5)?,
            success: row.bool(6)?,
            hit: row.direction(13)?,
            samples: Vec::new(),
        };
        if out.contains_key(&key) {
            return Err(Error::DuplicateTrial {
                file: file.to_string(),
                line: row.line,
                key: key_str(&key),
            });
        }
        out.insert(key, trial);
    }
    Ok(out)
}

fn attach_samples<R: Read>(file: &str, source: R, trials: &mut BTreeMap<Key, Trial>) -> Result<()> {
    let mut rdr = reader(source);
    let Some(cols) = columns(file, &mut rdr, &SAMPLES_HEADER)? else {
        return Ok(());
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(file, e))?;
        let row = Row {
            file,
            line: rec.position().map_or(0, |p| p.line()),
            rec: &rec,
            cols: &cols,
            names: &SAMPLES_HEADER,
        };
        let key = row.key()?;
        let t_s = row.f64(3)?;
        let direction = row.direction(4)?;
        let Some(trial) = trials.get_mut(&key) else {
            return Err(Error::DanglingSample {
                file: file.to_string(),
                line: row.line,
                key: key_str(&key),
            });
        };
        if trial
            .samples
            .last()
            .is_some_and(|s| t_s.is_nan() || t_s <= s.t_s)
        {
            return Err(Error::NonMonotoneTime {
                file: file.to_string(),
                line: row.line,
                key: key_str(&key),
                t_s,
            });
        }
        trial.samples.push(RaySample { t_s, direction });
    }
    Ok(())
}

fn finish(trials: BTreeMap<Key, Trial>) -> Result<Vec<Trial>> {
    let trials: Vec<Trial> = trials.into_values().collect();
    for t in &trials {
        t.validate()?;
    }
    Ok(trials)
}

fn sort_trials(trials: &mut [Trial]) {
    trials.sort_by(|a, b| {
        (&a.participant_id, a.session, a.trial_index).cmp(&(
            &b.participant_id,
            b.session,
            b.trial_index,
        ))
    });
}

/// Joins a trials log and a samples log, validates every trial and returns
/// them sorted by `(participant, session, trial_index)`.
pub fn load_trials<R1: Read, R2: Read>(trials: R1, samples: R2) -> Result<Vec<Trial>> {
    load_named("trials", trials, "samples", samples)
}

fn load_named<R1: Read, R2: Read>(
    tname: &str,
    trials: R1,
    sname: &str,
    samples: R2,
) -> Result<Vec<Trial>> {
    let mut map = read_trial_rows(tname, trials)?;
    attach_samples(sname, samples, &mut map)?;
    finish(map)
}

/// [`load_trials`] on two files; diagnostics name the files.
pub fn load_trial_files(trials: &Path, samples: &Path) -> Result<Vec<Trial>> {
    load_named(
        &trials.display().to_string(),
        open(trials)?,
        &samples.display().to_string(),
        open(samples)?,
    )
}

fn csv_writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink)
}

fn push_dir(rec: &mut Vec<String>, d: &Direction3) {
    rec.extend(d.to_array().iter().map(|v| num(*v)));
}

/// Writes the trials log (one row per trial, no samples).
pub fn write_trials<W: Write>(sink: W, trials: &[Trial]) -> Result<()> {
    let mut w = csv_writer(sink);
    let file = "trials";
    w.write_record(TRIALS_HEADER)
        .map_err(|e| csv_err(file, e))?;
    for t in trials {
        let c = t.condition();
        let mut rec = vec![
            t.participant_id.clone(),
            t.session.to_string(),
            t.trial_index.to_string(),
            num(c.alpha_deg()),
            num(c.omega_deg()),
            num(t.duration_s),
            t.success.to_string(),
        ];
        push_dir(&mut rec, &t.placed.start_center);
        push_dir(&mut rec, &t.placed.target_center);
        push_dir(&mut rec, &t.hit);
        w.write_record(&rec).map_err(|e| csv_err(file, e))?;
    }
    w.flush().map_err(|e| io_err(Path::new(file), e))
}

/// Writes the samples log (one row per ray sample).
pub fn write_samples<W: Write>(sink: W, trials: &[Trial]) -> Result<()> {
    let mut w = csv_writer(sink);
    let file = "samples";
    w.write_record(SAMPLES_HEADER)
        .map_err(|e| csv_err(file, e))?;
    for t in trials {
        for s in &t.samples {
            let mut rec = vec![
                t.participant_id.clone(),
                t.session.to_string(),
                t.trial_index.to_string(),
                num(s.t_s),
            ];
            push_dir(&mut rec, &s.direction);
            w.write_record(&rec).map_err(|e| csv_err(file, e))?;
        }
    }
    w.flush().map_err(|e| io_err(Path::new(file), e))
}

/// Writes both logs to files.
pub fn write_trial_files(trials_path: &Path, samples_path: &Path, trials: &[Trial]) -> Result<()> {
    write_trials(create(trials_path)?, trials).map_err(|e| relabel(e, trials_path))?;
    write_samples(create(samples_path)?, trials).map_err(|e| relabel(e, samples_path))
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { reason, .. } | Error::Format { reason, .. } => io_err(path, reason),
        other => other,
    }
}

#[derive(Serialize, Deserialize)]
struct Bundle {
    format: String,
    trials: Vec<Trial>,
}

/// Writes all trials, samples included, as one JSON document.
pub fn write_bundle<W: Write>(mut sink: W, trials: &[Trial]) -> Result<()> {
    let bundle = BundleRef {
        format: BUNDLE_FORMAT,
        trials,
    };
    serde_json::to_writer(&mut sink, &bundle).map_err(|e| json_err("bundle", e))?;
    sink.write_all(b"\n")
        .map_err(|e| io_err(Path::new("bundle"), e))
}

#[derive(Serialize)]
struct BundleRef<'a> {
    format: &'a str,
    trials: &'a [Trial],
}

/// Reads a JSON bundle; same validation and ordering as [`load_trials`].
pub fn read_bundle<R: Read>(source: R) -> Result<Vec<Trial>> {
    read_bundle_named("bundle", source)
}

fn read_bundle_named<R: Read>(file: &str, source: R) -> Result<Vec<Trial>> {
    let bundle: Bundle = serde_json::from_reader(source).map_err(|e| json_err(file, e))?;
    if bundle.format != BUNDLE_FORMAT {
        return Err(Error::Format {
            file: file.to_string(),
            reason: format!("unsupported bundle format `{}`", bundle.format),
        });
    }
    let mut trials = bundle.trials;
    for w in trials.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if (&a.participant_id, a.session, a.trial_index)
            == (&b.participant_id, b.session, b.trial_index)
        {
            return Err(Error::DuplicateTrial {
                file: file.to_string(),
                line: 0,
                key: b.label(),
            });
        }
    }
    for t in &trials {
        t.validate()?;
    }
    sort_trials(&mut trials);
    Ok(trials)
}

pub fn read_bundle_file(path: &Path) -> Result<Vec<Trial>> {
    read_bundle_named(&path.display().to_string(), open(path)?)
}

fn json_err(file: &str, e: serde_json::Error) -> Error {
    Error::Format {
        file: file.to_string(),
        reason: e.to_string(),
    }
}

/// Serializes any record as pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| json_err("json", e))?;
    s.push('\n');
    Ok(s)
}

fn from_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| json_err(&path.display().to_string(), e))
}

pub fn write_plan(path: &Path, plan: &TaskPlan) -> Result<()> {
    write_file(path, &to_json(plan)?)
}

pub fn read_plan(path: &Path) -> Result<TaskPlan> {
    from_json_file(path)
}

/// What a regression was fitted against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Predictor {
    Id(IdModel),
    /// Movement amplitude α in degrees.
    Alpha,
}

impl Predictor {
    pub fn name(&self) -> String {
        match self {
            Predictor::Id(m) => m.to_string(),
            Predictor::Alpha => "alpha".to_string(),
        }
    }

    /// Predictor value for a condition, `None` when the model does not apply.
    pub fn x(&self, c: &AngularCondition) -> Option<f64> {
        match self {
            Predictor::Id(m) => m.angular(c).ok(),
            Predictor::Alpha => Some(c.alpha_deg()),
        }
    }

    fn axis_label(&self) -> String {
        match self {
            Predictor::Id(m) => format!("ID ({m})"),
            Predictor::Alpha => "alpha (deg)".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub predictor: Predictor,
    pub fit: RegressionFit,
}

/// A table as delimited text plus an aligned plain-text rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableDoc {
    pub csv: String,
    pub text: String,
}

/// Regression summary, scatter data and one SVG plot per fit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FitReport {
    pub summary: TableDoc,
    pub scatter_csv: String,
    /// `(name, svg document)`; a single `scatter` plot when there are no fits.
    pub plots: Vec<(String, String)>,
}

pub const NONPHYSICAL_FLAG: &str = "nonphysical intercept";

fn csv_line(fields: &[String]) -> String {
    let mut w = csv_writer(Vec::new());
    w.write_record(fields).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 input")
}

/// Left-aligns the first column and right-aligns the rest.
fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn fixed4(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

fn percent(r2: f64) -> String {
    format!("{:.2}%", 100.0 * r2)
}

/// Breakpoint sweep rows in sweep order.
pub fn emit_breakpoint_table(rows: &[TwoPartFit]) -> TableDoc {
    let header: Vec<String> = BREAKPOINT_HEADER.iter().map(|s| s.to_string()).collect();
    let mut csv = csv_line(&header);
    let mut text = vec![header];
    for r in rows {
        let nums = [
            r.left.r2, r.left.a, r.left.b, r.right.r2, r.right.a, r.right.b,
        ];
        let mut rec = vec![r.label(), num(r.breakpoint_id)];
        rec.extend(nums.iter().map(|v| num(*v)));
        csv.push_str(&csv_line(&rec));
        text.push(vec![
            r.label(),
            fixed4(r.breakpoint_id),
            percent(r.left.r2),
            fixed4(r.left.a),
            fixed4(r.left.b),
            percent(r.right.r2),
            fixed4(r.right.a),
            fixed4(r.right.b),
        ]);
    }
    TableDoc {
        csv,
        text: aligned(&text),
    }
}

/// One-part fit summary plus the scatter data behind it.
pub fn emit_fit_report(fits: &[NamedFit], means: &[ConditionMean]) -> FitReport {
    let header: Vec<String> = [
        "model",
        "intercept_s",
        "slope_s_per_unit",
        "r2",
        "n",
        "flag",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut csv = csv_line(&header);
    let mut text = vec![vec![
        "model".to_string(),
        "R2".to_string(),
        "Intercept".to_string(),
        "Slope".to_string(),
        "n".to_string(),
        String::new(),
    ]];
    for f in fits {
        let flag = if f.fit.a < 0.0 { NONPHYSICAL_FLAG } else { "" };
        csv.push_str(&csv_line(&[
            f.predictor.name(),
            num(f.fit.a),
            num(f.fit.b),
            num(f.fit.r2),
            f.fit.n.to_string(),
            flag.to_string(),
        ]));
        text.push(vec![
            f.predictor.name(),
            percent(f.fit.r2),
            fixed4(f.fit.a),
            fixed4(f.fit.b),
            f.fit.n.to_string(),
            flag.to_string(),
        ]);
    }

    let mut scatter_header: Vec<String> = ["alpha_deg", "omega_deg", "mean_time_s", "trial_count"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    scatter_header.extend(fits.iter().map(|f| format!("x_{}", f.predictor.name())));
    let mut scatter_csv = csv_line(&scatter_header);
    for m in means {
        let mut rec = vec![
            num(m.condition.alpha_deg()),
            num(m.condition.omega_deg()),
            num(m.mean_time_s),
            m.trial_count.to_string(),
        ];
        rec.extend(
            fits.iter()
                .map(|f| f.predictor.x(&m.condition).map(num).unwrap_or_default()),
        );
        scatter_csv.push_str(&csv_line(&rec));
    }

    let plots = if fits.is_empty() {
        let pts: Vec<_> = means
            .iter()
            .map(|m| (m.condition.alpha_deg(), m.mean_time_s))
            .collect();
        vec![(
            "scatter".to_string(),
            svg_plot("mean time by condition", "alpha (deg)", &pts, None),
        )]
    } else {
        fits.iter()
            .map(|f| {
                let pts: Vec<_> = means
                    .iter()
                    .filter_map(|m| f.predictor.x(&m.condition).map(|x| (x, m.mean_time_s)))
                    .collect();
                let title = format!(
                    "{}: MT = {:.4} + {:.4} x, R2 = {}",
                    f.predictor.name(),
                    f.fit.a,
                    f.fit.b,
                    percent(f.fit.r2)
                );
                (
                    f.predictor.name(),
                    svg_plot(
                        &title,
                        &f.predictor.axis_label(),
                        &pts,
                        Some((f.fit.a, f.fit.b)),
                    ),
                )
            })
            .collect()
    };

    FitReport {
        summary: TableDoc {
            csv,
            text: aligned(&text),
        },
        scatter_csv,
        plots,
    }
}

fn padded_range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Scatter plot with an optional fitted line `y = a + b·x`.
fn svg_plot(title: &str, x_label: &str, points: &[(f64, f64)], line: Option<(f64, f64)>) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 56.0;
    let (x0, x1) = padded_range(points.iter().map(|p| p.0));
    let line_ys = line
        .map(|(a, b)| vec![a + b * x0, a + b * x1])
        .unwrap_or_default();
    let (y0, y1) = padded_range(points.iter().map(|p| p.1).chain(line_ys));
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{L:.2} {T:.2}V{:.2}H{:.2}" fill="none" stroke="black"/>"#,
        H - B,
        W - R
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (tx, ty) = (px(xv), py(yv));
        let _ = writeln!(
            s,
            r#"<path d="M{tx:.2} {:.2}v5M{L:.2} {ty:.2}h-5" stroke="black"/>"#,
            H - B
        );
        let _ = writeln!(
            s,
            r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            H - B + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            L - 8.0,
            ty + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (L + W - R) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">mean time (s)</text>"#,
        (T + H - B) / 2.0,
        (T + H - B) / 2.0
    );
    if let Some((a, b)) = line {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-width="1.5"/>"#,
            px(x0),
            py(a + b * x0),
            px(x1),
            py(a + b * x1)
        );
    }
    for &(x, y) in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            px(x),
            py(y)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let t = format!("{v:.3}");
    if t == "-0.000" {
        "0.000".to_string()
    } else {
        t
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Per-condition decile speeds.
pub fn velocity_csv(profiles: &[VelocityProfile]) -> String {
    let mut header: Vec<String> = ["alpha_deg", "omega_deg", "trial_count", "peak_decile"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=crate::analysis::PROFILE_BINS).map(|i| format!("d{i}_dps")));
    let mut out = csv_line(&header);
    for p in profiles {
        let mut rec = vec![
            num(p.condition.alpha_deg()),
            num(p.condition.omega_deg()),
            p.trial_count.to_string(),
            (p.peak_decile() + 1).to_string(),
        ];
        rec.extend(p.decile_mean_dps.iter().map(|v| num(*v)));
        out.push_str(&csv_line(&rec));
    }
    out
}

/// Per-condition projected hitpoint statistics.
pub fn hitpoint_csv(stats: &[HitpointSummary]) -> String {
    let header: Vec<String> = [
        "alpha_deg",
        "omega_deg",
        "n",
        "mean_x",
        "mean_y",
        "undershoot_fraction",
        "overshoot_fraction",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut out = csv_line(&header);
    for h in stats {
        out.push_str(&csv_line(&[
            num(h.condition.alpha_deg()),
            num(h.condition.omega_deg()),
            h.n.to_string(),
            num(h.mean_x),
            num(h.mean_y),
            num(h.undershoot_fraction),
            num(h.overshoot_fraction),
        ]));
    }
    out
}

/// Breakpoint sweep results under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub model: IdModel,
    pub rows: Vec<TwoPartFit>,
}

/// Everything `analyze` computes, cached so reports can be re-emitted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisCache {
    pub kept_trials: usize,
    pub removed_outliers: usize,
    pub failed_trials: usize,
    pub means: Vec<ConditionMean>,
    pub fits: Vec<NamedFit>,
    pub sweep: Option<SweepResult>,
    pub velocity: Vec<VelocityProfile>,
    pub hitpoints: Vec<HitpointSummary>,
    pub hitpoint_effects: Option<HitpointEffects>,
}

pub fn write_cache(path: &Path, cache: &AnalysisCache) -> Result<()> {
    write_file(path, &to_json(cache)?)
}

pub fn read_cache(path: &Path) -> Result<AnalysisCache> {
    from_json_file(path)
}

/// Writes every report artifact for `cache` into `dir` and returns the paths written.
pub fn write_report_dir(dir: &Path, cache: &AnalysisCache) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, contents: &str| -> Result<()> {
        let p = dir.join(name);
        write_file(&p, contents)?;
        written.push(p);
        Ok(())
    };
    let report = emit_fit_report(&cache.fits, &cache.means);
    put("fits.csv", &report.summary.csv)?;
    put("fits.txt", &report.summary.text)?;
    put("scatter.csv", &report.scatter_csv)?;
    for (name, svg) in &report.plots {
        put(&format!("plot_{name}.svg"), svg)?;
    }
    if let Some(sweep) = &cache.sweep {
        let table = emit_breakpoint_table(&sweep.rows);
        put(&format!("breakpoints_{}.csv", sweep.model), &table.csv)?;
        put(&format!("breakpoints_{}.txt", sweep.model), &table.text)?;
    }
    if !cache.velocity.is_empty() {
        put("velocity.csv", &velocity_csv(&cache.velocity))?;
    }
    if !cache.hitpoints.is_empty() {
        put("hitpoints.csv", &hitpoint_csv(&cache.hitpoints))?;
    }
    if let Some(e) = &cache.hitpoint_effects {
        let mut s = csv_line(&["term", "estimate"].map(String::from));
        for (term, v) in [
            ("intercept", e.intercept),
            ("alpha", e.alpha_coef),
            ("omega", e.omega_coef),
            ("r2", e.r2),
        ] {
            s.push_str(&csv_line(&[term.to_string(), num(v)]));
        }
        put("hitpoint_effects.csv", &s)?;
    }
    Ok(written)
}
