//! Text formats: RSSI traces, calibration points, deployments and scenarios
//! (JSON), position estimates, zone labels, and report tables.
//!
//! Every CSV writer starts with a `# format_version=1` comment line; readers
//! skip `#` lines, accept LF or CRLF, and report errors with 1-based file line
//! numbers. Numbers are written with at most 6 decimals.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Bounds, Dim, Position};
use crate::kalman::KalmanParams;
use crate::metrics::ConfusionMatrix3;
use crate::pathloss::{fmt_num, CalibrationPoint, PathLossModel, ProximityZone};
use crate::simulator::{Beacon, Deployment, NoiseSpec, ScenarioResult, SweepConfig, Trajectory};

pub const FORMAT_VERSION: u32 = 1;
pub const TRACE_HEADER: [&str; 3] = ["t_ms", "beacon_id", "rssi_dbm"];
pub const CALIBRATION_HEADER: [&str; 2] = ["distance_m", "rssi_dbm"];
pub const SWEEP_COLUMNS: [&str; 7] = [
    "particles",
    "beacons",
    "pf_mean",
    "pf_std",
    "kfpf_mean",
    "kfpf_std",
    "improvement_pct",
];
/// Marker written for ratios with a zero denominator.
pub const UNDEFINED: &str = "undef";

/// One timestamped RSSI observation from one beacon.
#[derive(Debug, Clone, PartialEq)]
pub struct RssiSample {
    pub t_ms: u64,
    pub beacon_id: String,
    pub rssi: f64,
}

/// A parsed trace plus non-fatal findings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedTrace {
    pub samples: Vec<RssiSample>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        column: String::new(),
        message: e.to_string(),
    }
}

fn header_of<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>> {
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: String::new(),
            message: "missing header".into(),
        });
    }
    Ok(headers.iter().map(str::to_string).collect())
}

fn expect_header(found: &[String], expected: &[&str]) -> Result<()> {
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            line: 1,
            column: String::new(),
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                found.join(",")
            ),
        });
    }
    Ok(())
}

/// Iterates data records as `(line, record)` after checking their width.
fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
    width: usize,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + '_ {
    rdr.records().map(move |rec| {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                column: String::new(),
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        Ok((line, rec))
    })
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    line: u64,
    idx: usize,
    name: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    rec[idx].parse::<T>().map_err(|e| Error::Parse {
        line,
        column: name.to_string(),
        message: format!("`{}`: {e}", &rec[idx]),
    })
}

fn finite(value: f64, line: u64, name: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Parse {
            line,
            column: name.to_string(),
            message: "value must be finite".into(),
        })
    }
}

pub fn read_trace<R: Read>(source: R) -> Result<ParsedTrace> {
    let mut rdr = csv_reader(source);
    expect_header(&header_of(&mut rdr)?, &TRACE_HEADER)?;
    let mut out = ParsedTrace::default();
    let mut last_seen: BTreeMap<String, u64> = BTreeMap::new();
    for item in records(&mut rdr, 3) {
        let (line, rec) = item?;
        let t_ms: u64 = field(&rec, line, 0, "t_ms")?;
        let beacon_id = rec[1].to_string();
        if beacon_id.is_empty() {
            return Err(Error::Parse {
                line,
                column: "beacon_id".into(),
                message: "empty beacon id".into(),
            });
        }
        let rssi = finite(field(&rec, line, 2, "rssi_dbm")?, line, "rssi_dbm")?;
        if rssi == 0.0 {
            return Err(Error::Parse {
                line,
                column: "rssi_dbm".into(),
                message: "rssi 0 is the end-of-stream sentinel and not a valid sample".into(),
            });
        }
        if let Some(prev) = last_seen.insert(beacon_id.clone(), t_ms) {
            if t_ms < prev {
                let msg = format!(
                    "line {line}: t_ms {t_ms} for beacon `{beacon_id}` goes back from {prev}"
                );
                log::warn!("{msg}");
                out.warnings.push(msg);
            }
        }
        out.samples.push(RssiSample {
            t_ms,
            beacon_id,
            rssi,
        });
    }
    Ok(out)
}

fn versioned_writer<W: Write>(mut sink: W) -> Result<csv::Writer<W>> {
    writeln!(sink, "# format_version={FORMAT_VERSION}")?;
    Ok(csv::Writer::from_writer(sink))
}

fn flush<W: Write>(mut wtr: csv::Writer<W>) -> Result<()> {
    wtr.flush()?;
    Ok(())
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_trace<W: Write>(samples: &[RssiSample], sink: W) -> Result<()> {
    let mut wtr = versioned_writer(sink)?;
    wtr.write_record(TRACE_HEADER).map_err(csv_write_err)?;
    for s in samples {
        wtr.write_record([s.t_ms.to_string(), s.beacon_id.clone(), fmt_num(s.rssi)])
            .map_err(csv_write_err)?;
    }
    flush(wtr)
}

pub fn read_calibration<R: Read>(source: R) -> Result<Vec<CalibrationPoint>> {
    let mut rdr = csv_reader(source);
    expect_header(&header_of(&mut rdr)?, &CALIBRATION_HEADER)?;
    let mut out = Vec::new();
    for item in records(&mut rdr, 2) {
        let (line, rec) = item?;
        let distance = finite(field(&rec, line, 0, "distance_m")?, line, "distance_m")?;
        let mean_rssi = finite(field(&rec, line, 1, "rssi_dbm")?, line, "rssi_dbm")?;
        out.push(CalibrationPoint {
            distance,
            mean_rssi,
        });
    }
    Ok(out)
}

pub fn write_calibration<W: Write>(points: &[CalibrationPoint], sink: W) -> Result<()> {
    let mut wtr = versioned_writer(sink)?;
    wtr.write_record(CALIBRATION_HEADER)
        .map_err(csv_write_err)?;
    for p in points {
        wtr.write_record([fmt_num(p.distance), fmt_num(p.mean_rssi)])
            .map_err(csv_write_err)?;
    }
    flush(wtr)
}

/// Writes `t_ms,x_m,y_m[,z_m]`.
pub fn write_estimates<W: Write>(estimates: &[(u64, Position)], dim: Dim, sink: W) -> Result<()> {
    let mut wtr = versioned_writer(sink)?;
    let mut header = vec!["t_ms", "x_m", "y_m"];
    if dim == Dim::Three {
        header.push("z_m");
    }
    wtr.write_record(&header).map_err(csv_write_err)?;
    for (t, p) in estimates {
        let mut row = vec![t.to_string(), fmt_num(p.x), fmt_num(p.y)];
        if dim == Dim::Three {
            row.push(fmt_num(p.z));
        }
        wtr.write_record(&row).map_err(csv_write_err)?;
    }
    flush(wtr)
}

/// Reads positions from any CSV carrying `x_m,y_m` (and optionally `z_m`)
/// columns; other columns are ignored.
pub fn read_positions<R: Read>(source: R) -> Result<(Dim, Vec<Position>)> {
    let mut rdr = csv_reader(source);
    let header = header_of(&mut rdr)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(xi), Some(yi)) = (col("x_m"), col("y_m")) else {
        return Err(Error::Parse {
            line: 1,
            column: String::new(),
            message: "position files need `x_m` and `y_m` columns".into(),
        });
    };
    let zi = col("z_m");
    let dim = if zi.is_some() { Dim::Three } else { Dim::Two };
    let mut out = Vec::new();
    for item in records(&mut rdr, header.len()) {
        let (line, rec) = item?;
        let x = finite(field(&rec, line, xi, "x_m")?, line, "x_m")?;
        let y = finite(field(&rec, line, yi, "y_m")?, line, "y_m")?;
        let z = match zi {
            Some(i) => finite(field(&rec, line, i, "z_m")?, line, "z_m")?,
            None => 0.0,
        };
        out.push(Position::new(x, y, z));
    }
    Ok((dim, out))
}

/// Reads zone labels from the `zone` column, or `decided_zone` when there is
/// no `zone` column.
pub fn read_zone_labels<R: Read>(source: R) -> Result<Vec<ProximityZone>> {
    let mut rdr = csv_reader(source);
    let header = header_of(&mut rdr)?;
    let idx = header
        .iter()
        .position(|h| h == "zone")
        .or_else(|| header.iter().position(|h| h == "decided_zone"))
        .ok_or_else(|| Error::Parse {
            line: 1,
            column: String::new(),
            message: "label files need a `zone` or `decided_zone` column".into(),
        })?;
    let mut out = Vec::new();
    for item in records(&mut rdr, header.len()) {
        let (line, rec) = item?;
        let zone = rec[idx]
            .parse::<ProximityZone>()
            .map_err(|e| Error::Parse {
                line,
                column: header[idx].clone(),
                message: e.to_string(),
            })?;
        out.push(zone);
    }
    Ok(out)
}

pub fn write_zone_labels<W: Write>(labels: &[ProximityZone], sink: W) -> Result<()> {
    let mut wtr = versioned_writer(sink)?;
    wtr.write_record(["zone"]).map_err(csv_write_err)?;
    for z in labels {
        wtr.write_record([z.as_str()]).map_err(csv_write_err)?;
    }
    flush(wtr)
}

// ---------------------------------------------------------------------------
// JSON documents

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeaconDoc {
    pub id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
    pub n: f64,
    pub c: f64,
    #[serde(default = "one")]
    pub d0: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentDoc {
    #[serde(default = "version")]
    pub format_version: u32,
    #[serde(default = "two")]
    pub dim: u8,
    pub bounds: BoundsDoc,
    pub beacons: Vec<BeaconDoc>,
}

fn version() -> u32 {
    FORMAT_VERSION
}

fn two() -> u8 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanDoc {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Diagonal of Q.
    #[serde(default = "default_q")]
    pub q: [f64; 2],
    #[serde(default = "default_r")]
    pub r: f64,
    /// Diagonal of the initial covariance.
    #[serde(default = "default_p0")]
    pub p0: [f64; 2],
}

fn default_dt() -> f64 {
    KalmanParams::default().dt
}
fn default_q() -> [f64; 2] {
    [0.001, 0.001]
}
fn default_r() -> f64 {
    KalmanParams::default().r
}
fn default_p0() -> [f64; 2] {
    [100.0, 100.0]
}

impl Default for KalmanDoc {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            q: default_q(),
            r: default_r(),
            p0: default_p0(),
        }
    }
}

impl KalmanDoc {
    pub fn to_params(&self) -> Result<KalmanParams> {
        let params = KalmanParams {
            dt: self.dt,
            q: nalgebra::Matrix2::new(self.q[0], 0.0, 0.0, self.q[1]),
            r: self.r,
            p0: nalgebra::Matrix2::new(self.p0[0], 0.0, 0.0, self.p0[1]),
        };
        params.validate().map_err(|e| Error::Config {
            path: "kalman".into(),
            message: e.to_string(),
        })?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointDoc {
    pub t_ms: u64,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
}

/// Scenario file: a deployment plus noise, optional sweep, optional
/// trajectory and optional Kalman tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default = "version")]
    pub format_version: u32,
    pub deployment: DeploymentDoc,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<WaypointDoc>>,
    #[serde(default)]
    pub kalman: KalmanDoc,
    #[serde(default = "period")]
    pub period_ms: u64,
}

fn period() -> u64 {
    crate::simulator::DEFAULT_PERIOD_MS
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub deployment: Deployment,
    pub noise: NoiseSpec,
    pub sweep: Option<SweepConfig>,
    pub trajectory: Option<Trajectory>,
    pub kalman: KalmanParams,
    pub period_ms: u64,
}

fn json_from_reader<T: serde::de::DeserializeOwned, R: Read>(source: R) -> Result<T> {
    let mut de = serde_json::Deserializer::from_reader(source);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config {
            path: if path == "." { "$".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

fn check_version(version: u32, path: &str) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Config {
            path: path.into(),
            message: format!("unsupported format_version {version}"),
        });
    }
    Ok(())
}

fn to_array(v: &[f64], dim: Dim, path: &str) -> Result<[f64; 3]> {
    if v.len() < dim.axes() || v.len() > 3 {
        return Err(Error::Config {
            path: path.into(),
            message: format!("expected {} coordinates, found {}", dim.axes(), v.len()),
        });
    }
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(v);
    if dim == Dim::Two {
        out[2] = 0.0;
    }
    Ok(out)
}

impl DeploymentDoc {
    pub fn into_deployment(self, prefix: &str) -> Result<Deployment> {
        check_version(self.format_version, &format!("{prefix}format_version"))?;
        let dim = Dim::from_axes(self.dim as usize).ok_or_else(|| Error::Config {
            path: format!("{prefix}dim"),
            message: format!("dim must be 2 or 3, found {}", self.dim),
        })?;
        let bounds = Bounds::new(
            to_array(&self.bounds.min, dim, &format!("{prefix}bounds.min"))?,
            to_array(&self.bounds.max, dim, &format!("{prefix}bounds.max"))?,
        );
        bounds.validate(dim).map_err(|e| Error::Config {
            path: format!("{prefix}bounds"),
            message: e.to_string(),
        })?;
        let beacons = self
            .beacons
            .into_iter()
            .enumerate()
            .map(|(i, b)| {
                let model = PathLossModel::new(b.n, b.c, b.d0).map_err(|e| Error::Config {
                    path: format!("{prefix}beacons[{i}]"),
                    message: e.to_string(),
                })?;
                let z = if dim == Dim::Three { b.z } else { 0.0 };
                Ok(Beacon {
                    id: b.id,
                    position: Position::new(b.x, b.y, z),
                    model,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let deployment = Deployment {
            beacons,
            bounds,
            dim,
        };
        deployment.validate().map_err(|e| match e {
            Error::Config { path, message } => Error::Config {
                path: format!("{prefix}{path}"),
                message,
            },
            other => other,
        })?;
        Ok(deployment)
    }

    pub fn from_deployment(d: &Deployment) -> Self {
        let axes = d.dim.axes();
        Self {
            format_version: FORMAT_VERSION,
            dim: axes as u8,
            bounds: BoundsDoc {
                min: d.bounds.min[..axes].to_vec(),
                max: d.bounds.max[..axes].to_vec(),
            },
            beacons: d
                .beacons
                .iter()
                .map(|b| BeaconDoc {
                    id: b.id.clone(),
                    x: b.position.x,
                    y: b.position.y,
                    z: b.position.z,
                    n: b.model.n,
                    c: b.model.c,
                    d0: b.model.d0,
                })
                .collect(),
        }
    }
}

pub fn read_deployment<R: Read>(source: R) -> Result<Deployment> {
    json_from_reader::<DeploymentDoc, _>(source)?.into_deployment("")
}

/// Reads a deployment document, or the deployment section of a scenario.
pub fn read_deployment_or_scenario<R: Read>(mut source: R) -> Result<Deployment> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    let is_scenario = serde_json::from_slice::<serde_json::Value>(&buf)
        .map(|v| v.get("deployment").is_some())
        .unwrap_or(false);
    if is_scenario {
        Ok(read_scenario(buf.as_slice())?.deployment)
    } else {
        read_deployment(buf.as_slice())
    }
}

pub fn write_deployment<W: Write>(deployment: &Deployment, sink: W) -> Result<()> {
    serde_json::to_writer_pretty(sink, &DeploymentDoc::from_deployment(deployment))
        .map_err(|e| Error::Io(e.to_string()))
}

impl ScenarioDoc {
    pub fn into_scenario(self) -> Result<Scenario> {
        check_version(self.format_version, "format_version")?;
        let deployment = self.deployment.into_deployment("deployment.")?;
        self.noise.validate().map_err(|e| Error::Config {
            path: "noise".into(),
            message: e.to_string(),
        })?;
        if let Some(sweep) = &self.sweep {
            sweep.validate().map_err(|e| Error::Config {
                path: "sweep".into(),
                message: e.to_string(),
            })?;
            if let Some(&k) = sweep
                .beacon_counts
                .iter()
                .find(|&&k| k == 0 || k > deployment.beacons.len())
            {
                return Err(Error::Config {
                    path: "sweep.beacon_counts".into(),
                    message: format!("beacon count {k} outside 1..={}", deployment.beacons.len()),
                });
            }
        }
        let trajectory = self
            .trajectory
            .map(|wps| {
                Trajectory::new(
                    wps.iter()
                        .map(|w| {
                            (
                                w.t_ms,
                                Position::new(
                                    w.x,
                                    w.y,
                                    if deployment.dim == Dim::Three {
                                        w.z
                                    } else {
                                        0.0
                                    },
                                ),
                            )
                        })
                        .collect(),
                )
                .map_err(|e| Error::Config {
                    path: "trajectory".into(),
                    message: e.to_string(),
                })
            })
            .transpose()?;
        if self.period_ms == 0 {
            return Err(Error::Config {
                path: "period_ms".into(),
                message: "must be > 0".into(),
            });
        }
        Ok(Scenario {
            deployment,
            noise: self.noise,
            sweep: self.sweep,
            trajectory,
            kalman: self.kalman.to_params()?,
            period_ms: self.period_ms,
        })
    }
}

pub fn read_scenario<R: Read>(source: R) -> Result<Scenario> {
    json_from_reader::<ScenarioDoc, _>(source)?.into_scenario()
}

// ---------------------------------------------------------------------------
// Reports

fn markdown_table<W: Write>(sink: &mut W, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    writeln!(sink, "| {} |", header.join(" | "))?;
    writeln!(
        sink,
        "|{}|",
        header.iter().map(|_| "---").collect::<Vec<_>>().join("|")
    )?;
    for row in rows {
        writeln!(sink, "| {} |", row.join(" | "))?;
    }
    Ok(())
}

fn sweep_rows(result: &ScenarioResult) -> Vec<Vec<String>> {
    result
        .cells
        .iter()
        .map(|c| {
            vec![
                c.particles.to_string(),
                c.beacons.to_string(),
                fmt_num(c.pf_mean),
                fmt_num(c.pf_std),
                fmt_num(c.kfpf_mean),
                fmt_num(c.kfpf_std),
                fmt_num(c.improvement_pct()),
            ]
        })
        .collect()
}

/// Writes a sweep table. Columns are fixed: `particles,beacons,pf_mean,pf_std,
/// kfpf_mean,kfpf_std,improvement_pct`, one row per cell, particle-major.
pub fn write_report<W: Write>(
    result: &ScenarioResult,
    mut sink: W,
    format: ReportFormat,
) -> Result<()> {
    let rows = sweep_rows(result);
    match format {
        ReportFormat::Csv => {
            let mut wtr = versioned_writer(sink)?;
            wtr.write_record(SWEEP_COLUMNS).map_err(csv_write_err)?;
            for row in rows {
                wtr.write_record(&row).map_err(csv_write_err)?;
            }
            flush(wtr)
        }
        ReportFormat::Markdown => {
            let header: Vec<String> = SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect();
            markdown_table(&mut sink, &header, &rows)
        }
    }
}

fn ratio_cell(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_else(|| UNDEFINED.to_string())
}

/// Per-zone metrics laid out with one row per metric and one column per
/// (zone, method) pair, zone-major. A final `accuracy` row repeats each
/// method's accuracy under all of its zone columns.
pub fn write_zone_report<W: Write>(
    methods: &[(&str, ConfusionMatrix3)],
    mut sink: W,
    format: ReportFormat,
) -> Result<()> {
    let mut header = vec!["metric".to_string()];
    for zone in ProximityZone::RANGED {
        for (name, _) in methods {
            header.push(format!("{zone}_{name}"));
        }
    }
    let metrics: Vec<Vec<_>> = ProximityZone::RANGED
        .iter()
        .map(|&z| methods.iter().map(|(_, cm)| cm.zone_metrics(z)).collect())
        .collect();
    let mut rows = Vec::new();
    type Count = fn(&crate::metrics::ZoneMetrics) -> u64;
    let counts: [(&str, Count); 4] = [
        ("tp", |m| m.tp),
        ("tn", |m| m.tn),
        ("fp", |m| m.fp),
        ("fn", |m| m.fn_),
    ];
    for (label, get) in counts {
        let mut row = vec![label.to_string()];
        row.extend(metrics.iter().flatten().map(|m| get(m).to_string()));
        rows.push(row);
    }
    for r in 0..6 {
        let mut row = vec![metrics[0][0].ratios()[r].0.to_string()];
        row.extend(
            metrics
                .iter()
                .flatten()
                .map(|m| ratio_cell(m.ratios()[r].1)),
        );
        rows.push(row);
    }
    let mut acc = vec!["accuracy".to_string()];
    for _ in ProximityZone::RANGED {
        acc.extend(methods.iter().map(|(_, cm)| ratio_cell(cm.accuracy().ok())));
    }
    rows.push(acc);

    match format {
        ReportFormat::Csv => {
            let mut wtr = versioned_writer(sink)?;
            wtr.write_record(&header).map_err(csv_write_err)?;
            for row in rows {
                wtr.write_record(&row).map_err(csv_write_err)?;
            }
            flush(wtr)
        }
        ReportFormat::Markdown => markdown_table(&mut sink, &header, &rows),
    }
}
