//! File formats: the `#`-commented numeric CSV dialect used for all data
//! files, fit results as JSON, and the run manifest written next to every
//! output file.
//!
//! CSV conventions: UTF-8, `,` separator, `.` decimal point, one header row;
//! metadata lines `# key=value` precede the header. Floats are written with
//! the shortest round-trip representation, so identical data gives identical
//! bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use sqz_core::estimation::{FitResult, GainMeasurement};
use sqz_core::noise_analysis::{AllanPoint, PsdPoint, TimeSeries};
use sqz_core::opo_model::{Quadrature, SpectrumTrace};
use sqz_core::physics::{db_from_ratio, ratio_from_db};

/// A parsed numeric CSV: leading `# key=value` metadata, a header row, and
/// uniform numeric data rows.
#[derive(Debug)]
pub struct CsvDoc {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvDoc {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_f64(&self, key: &str, path: &str) -> Result<Option<f64>, String> {
        match self.meta(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<f64>()
                .map(Some)
                .map_err(|_| format!("{path}: metadata '{key}={raw}' is not a number")),
        }
    }

    /// Index of a required column.
    pub fn column(&self, name: &str, path: &str) -> Result<usize, String> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("{path}: missing column '{name}' (header: {:?})", self.header))
    }
}

pub fn read_csv(path: &str) -> Result<CsvDoc, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let mut metadata = Vec::new();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some((k, v)) = comment.split_once('=') {
                metadata.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        match &header {
            None => {
                header = Some(line.split(',').map(|h| h.trim().to_string()).collect());
            }
            Some(cols) => {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != cols.len() {
                    return Err(format!(
                        "{path}:{line_no}: expected {} fields, found {}",
                        cols.len(),
                        fields.len()
                    ));
                }
                let mut row = Vec::with_capacity(fields.len());
                for (col, field) in fields.iter().enumerate() {
                    let v: f64 = field.trim().parse().map_err(|_| {
                        format!(
                            "{path}:{line_no}: field {} ('{}') is not a number",
                            col + 1,
                            field.trim()
                        )
                    })?;
                    row.push(v);
                }
                rows.push(row);
            }
        }
    }
    let header = header.ok_or_else(|| format!("{path}: no header row found"))?;
    Ok(CsvDoc { metadata, header, rows })
}

fn fmt_row(values: &[f64]) -> String {
    let mut line = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        let _ = write!(line, "{v}");
    }
    line
}

// ---- gain data: pump_power_w,gain,power_frac_err ----

pub fn gain_csv(data: &[GainMeasurement]) -> String {
    let mut out = String::from("pump_power_w,gain,power_frac_err\n");
    for d in data {
        out.push_str(&fmt_row(&[d.pump_power_w, d.gain, d.power_fractional_uncertainty]));
        out.push('\n');
    }
    out
}

pub fn read_gain_csv(path: &str) -> Result<Vec<GainMeasurement>, String> {
    let doc = read_csv(path)?;
    let p = doc.column("pump_power_w", path)?;
    let g = doc.column("gain", path)?;
    let e = doc.column("power_frac_err", path)?;
    Ok(doc
        .rows
        .iter()
        .map(|row| GainMeasurement {
            pump_power_w: row[p],
            gain: row[g],
            power_fractional_uncertainty: row[e],
        })
        .collect())
}

// ---- spectrum trace: frequency_hz,variance_db_rel_shot ----

fn quadrature_name(q: Quadrature) -> &'static str {
    match q {
        Quadrature::Squeezed => "squeezed",
        Quadrature::Antisqueezed => "antisqueezed",
    }
}

pub fn parse_quadrature(name: &str) -> Result<Quadrature, String> {
    match name {
        "squeezed" => Ok(Quadrature::Squeezed),
        "antisqueezed" => Ok(Quadrature::Antisqueezed),
        other => Err(format!("unknown quadrature '{other}' (squeezed|antisqueezed)")),
    }
}

pub fn spectrum_csv(trace: &SpectrumTrace) -> Result<String, String> {
    let mut out = String::new();
    let _ = writeln!(out, "# pump_power_w={}", trace.pump_power_w);
    let _ = writeln!(out, "# quadrature={}", quadrature_name(trace.quadrature));
    if let Some(rbw) = trace.rbw_hz {
        let _ = writeln!(out, "# rbw_hz={rbw}");
    }
    if let Some(vbw) = trace.vbw_hz {
        let _ = writeln!(out, "# vbw_hz={vbw}");
    }
    if let Some(avg) = trace.averages {
        let _ = writeln!(out, "# averages={avg}");
    }
    out.push_str("frequency_hz,variance_db_rel_shot\n");
    for &(f, v) in &trace.points {
        let db = db_from_ratio(v).map_err(|e| format!("cannot write trace point: {e}"))?;
        out.push_str(&fmt_row(&[f, db]));
        out.push('\n');
    }
    Ok(out)
}

pub fn read_spectrum_csv(path: &str) -> Result<SpectrumTrace, String> {
    let doc = read_csv(path)?;
    let f = doc.column("frequency_hz", path)?;
    let v = doc.column("variance_db_rel_shot", path)?;
    let pump_power_w = doc
        .meta_f64("pump_power_w", path)?
        .ok_or_else(|| format!("{path}: missing '# pump_power_w=' metadata"))?;
    let quadrature = parse_quadrature(
        doc.meta("quadrature")
            .ok_or_else(|| format!("{path}: missing '# quadrature=' metadata"))?,
    )
    .map_err(|e| format!("{path}: {e}"))?;
    let trace = SpectrumTrace {
        pump_power_w,
        quadrature,
        points: doc.rows.iter().map(|row| (row[f], ratio_from_db(row[v]))).collect(),
        rbw_hz: doc.meta_f64("rbw_hz", path)?,
        vbw_hz: doc.meta_f64("vbw_hz", path)?,
        averages: doc.meta_f64("averages", path)?.map(|a| a as u32),
    };
    trace.validate().map_err(|e| format!("{path}: invalid trace: {e}"))?;
    Ok(trace)
}

// ---- power sweep: pump_power_w,variance_db_rel_shot ----

/// Sweep points (linear variance) plus any declared quadrature and sideband
/// frequency.
pub type SweepFile = (Vec<(f64, f64)>, Option<Quadrature>, Option<f64>);

pub fn read_sweep_csv(path: &str) -> Result<SweepFile, String> {
    let doc = read_csv(path)?;
    let p = doc.column("pump_power_w", path)?;
    let v = doc.column("variance_db_rel_shot", path)?;
    let quadrature = match doc.meta("quadrature") {
        Some(name) => Some(parse_quadrature(name).map_err(|e| format!("{path}: {e}"))?),
        None => None,
    };
    let freq = doc.meta_f64("sideband_frequency_hz", path)?;
    let points = doc.rows.iter().map(|row| (row[p], ratio_from_db(row[v]))).collect();
    Ok((points, quadrature, freq))
}

// ---- time series: one 'value' column ----

pub fn timeseries_csv(series: &TimeSeries) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# sample_rate_hz={}", series.sample_rate_hz);
    out.push_str("value\n");
    for v in &series.samples {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn read_timeseries_csv(path: &str) -> Result<TimeSeries, String> {
    let doc = read_csv(path)?;
    let v = doc.column("value", path)?;
    let sample_rate_hz = doc.meta_f64("sample_rate_hz", path)?.unwrap_or(1.0);
    TimeSeries::new(sample_rate_hz, doc.rows.iter().map(|row| row[v]).collect())
        .map_err(|e| format!("{path}: {e}"))
}

// ---- analysis outputs ----

pub fn adev_csv(points: &[AllanPoint]) -> String {
    let mut out = String::from("tau_s,oadev,num_terms\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.tau_s, p.oadev, p.num_terms);
    }
    out
}

pub fn psd_csv(points: &[PsdPoint]) -> String {
    let mut out = String::from("frequency_hz,psd_per_hz\n");
    for p in points {
        out.push_str(&fmt_row(&[p.frequency_hz, p.density]));
        out.push('\n');
    }
    out
}

// ---- fit results as JSON ----

#[derive(Serialize)]
struct FitResultJson<'a> {
    params: serde_json::Map<String, serde_json::Value>,
    std_errors: serde_json::Map<String, serde_json::Value>,
    covariance: &'a [f64],
    rss: f64,
    dof: usize,
    converged: bool,
    iterations: usize,
    warnings: &'a [String],
}

pub fn fit_result_json(fit: &FitResult) -> String {
    let mut params = serde_json::Map::new();
    let mut std_errors = serde_json::Map::new();
    for ((name, value), se) in
        fit.parameter_names.iter().zip(&fit.values).zip(&fit.standard_errors)
    {
        params.insert(name.clone(), serde_json::json!(value));
        std_errors.insert(name.clone(), serde_json::json!(se));
    }
    let doc = FitResultJson {
        params,
        std_errors,
        covariance: &fit.covariance,
        rss: fit.rss,
        dof: fit.dof,
        converged: fit.converged,
        iterations: fit.iterations,
        warnings: &fit.warnings,
    };
    serde_json::to_string_pretty(&doc).expect("fit result serializes")
}

// ---- run manifest ----

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub input_files: Vec<String>,
    pub output_files: Vec<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config_repr: &str,
        seed: Option<u64>,
        input_files: Vec<String>,
        output_files: Vec<String>,
    ) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(config_repr.as_bytes());
        let digest = hasher.finalize();
        let mut config_digest = String::with_capacity(2 * digest.len() + 7);
        config_digest.push_str("sha256:");
        for byte in digest {
            let _ = write!(config_digest, "{byte:02x}");
        }
        RunManifest {
            command: command.to_string(),
            config_digest,
            seed,
            input_files,
            output_files,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Write `content` to `path` (or stdout when `path` is `None`). File outputs
/// get a `<path>.manifest.json` sidecar recording the run.
pub fn emit(
    content: &str,
    path: Option<&str>,
    manifest: impl FnOnce(&str) -> RunManifest,
) -> Result<(), String> {
    match path {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => {
            if let Some(parent) = Path::new(path).parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)
                        .map_err(|e| format!("cannot create {}: {e}", parent.display()))?;
                }
            }
            fs::write(path, content).map_err(|e| format!("cannot write {path}: {e}"))?;
            let manifest = manifest(path);
            let manifest_path = format!("{path}.manifest.json");
            let body = serde_json::to_string_pretty(&manifest)
                .expect("manifest serializes") + "\n";
            fs::write(&manifest_path, body)
                .map_err(|e| format!("cannot write {manifest_path}: {e}"))?;
            Ok(())
        }
    }
}
