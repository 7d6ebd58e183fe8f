//! CSV interchange formats.
//!
//! Every file starts with a `# fockscan <kind> v<version>` comment line that
//! may carry `key=value` metadata, followed by a header row and data rows.
//! Floats are written with 17 significant digits so they round-trip
//! exactly; infinities are written as `inf`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};

use crate::detector::{PulseHeightHistogram, ThresholdSet};
use crate::error::{Error, Result};
use crate::estimation::{FitResult, SensitivityCurve};
use crate::experiment::ScanResult;
use crate::subrayleigh::{HarmonicSpectrum, Pattern};

pub const SCHEMA_VERSION: u32 = 1;

/// `x` with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Parsed leading comment line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaTag {
    pub kind: String,
    pub version: u32,
    pub meta: BTreeMap<String, String>,
}

fn tag_line(kind: &str, meta: &[(&str, String)]) -> String {
    let mut line = format!("# fockscan {kind} v{SCHEMA_VERSION}");
    for (k, v) in meta {
        line.push_str(&format!(" {k}={v}"));
    }
    line.push('\n');
    line
}

fn parse_tag(line: &str) -> Option<SchemaTag> {
    let mut words = line.strip_prefix('#')?.split_whitespace();
    if words.next()? != "fockscan" {
        return None;
    }
    let kind = words.next()?.to_string();
    let version = words.next()?.strip_prefix('v')?.parse().ok()?;
    let meta = words
        .filter_map(|w| w.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    Some(SchemaTag { kind, version, meta })
}

struct Table {
    tag: Option<SchemaTag>,
    header: StringRecord,
    rows: Vec<(u64, StringRecord)>,
}

fn read_table<R: Read>(mut reader: R, context: &str, expected_kind: &str) -> Result<Table> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let tag = text.lines().next().and_then(parse_tag);
    if let Some(t) = &tag {
        if t.kind != expected_kind {
            return Err(Error::schema(
                context,
                1,
                format!("expected a {expected_kind} file, found {}", t.kind),
            ));
        }
        if t.version > SCHEMA_VERSION {
            return Err(Error::schema(
                context,
                1,
                format!("unsupported schema version {}", t.version),
            ));
        }
    }
    let mut csv = ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = csv
        .headers()
        .map_err(|e| Error::schema(context, 1, e.to_string()))?
        .clone();
    let mut rows = Vec::new();
    for rec in csv.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::schema(context, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(Table { tag, header, rows })
}

fn expect_header(table: &Table, context: &str, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = table.header.iter().collect();
    if got != expected {
        return Err(Error::schema(
            context,
            header_line(table),
            format!("expected columns {expected:?}, found {got:?}"),
        ));
    }
    Ok(())
}

fn header_line(table: &Table) -> u64 {
    table.header.position().map_or(1, |p| p.line())
}

fn field<T: std::str::FromStr>(rec: &StringRecord, idx: usize, line: u64, context: &str, name: &str) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::schema(context, line, format!("missing column {name}")))?;
    raw.parse()
        .map_err(|_| Error::schema(context, line, format!("cannot parse {name} from {raw:?}")))
}

fn check_width(rec: &StringRecord, width: usize, line: u64, context: &str) -> Result<()> {
    if rec.len() != width {
        return Err(Error::schema(
            context,
            line,
            format!("expected {width} fields, found {}", rec.len()),
        ));
    }
    Ok(())
}

fn write_rows<W: Write>(
    mut w: W,
    tag: String,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    w.write_all(tag.as_bytes())?;
    let mut csv = WriterBuilder::new().from_writer(w);
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    csv.write_record(header).map_err(to_io)?;
    for row in rows {
        csv.write_record(&row).map_err(to_io)?;
    }
    csv.flush()?;
    Ok(())
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

// --- scan -----------------------------------------------------------------

/// `phi_rad,n_pulses,c0,…,cK`. Repetition rate and config fingerprint travel
/// in the tag line.
pub fn write_scan_csv<W: Write>(w: W, result: &ScanResult) -> Result<()> {
    let k_max = result.k_max();
    let mut header = strings(&["phi_rad", "n_pulses"]);
    header.extend((0..=k_max).map(|k| format!("c{k}")));
    let tag = tag_line(
        "scan",
        &[
            ("rep_rate_hz", format_f64(result.rep_rate)),
            ("fingerprint", result.config_fingerprint.clone()),
        ],
    );
    let rows = result.phases.iter().zip(&result.counts).map(|(phi, row)| {
        let mut out = vec![format_f64(*phi), result.pulses_per_point.to_string()];
        out.extend(row.iter().map(u64::to_string));
        out
    });
    write_rows(w, tag, &header, rows)
}

/// Reads a scan table. `default_rep_rate` applies when the file does not
/// carry one (e.g. data exported from an acquisition system).
pub fn read_scan_csv<R: Read>(r: R, default_rep_rate: f64) -> Result<ScanResult> {
    const CTX: &str = "scan csv";
    let table = read_table(r, CTX, "scan")?;
    let cols: Vec<&str> = table.header.iter().collect();
    if cols.len() < 3 || cols[0] != "phi_rad" || cols[1] != "n_pulses" {
        return Err(Error::schema(
            CTX,
            header_line(&table),
            "expected columns phi_rad,n_pulses,c0,…",
        ));
    }
    for (k, name) in cols[2..].iter().enumerate() {
        if *name != format!("c{k}") {
            return Err(Error::schema(
                CTX,
                header_line(&table),
                format!("column {} should be c{k}, found {name}", k + 2),
            ));
        }
    }
    let width = cols.len();
    if table.rows.is_empty() {
        return Err(Error::schema(CTX, header_line(&table), "no data rows"));
    }
    let mut phases = Vec::new();
    let mut counts = Vec::new();
    let mut pulses: Option<u64> = None;
    for (line, rec) in &table.rows {
        let line = *line;
        check_width(rec, width, line, CTX)?;
        let phi: f64 = field(rec, 0, line, CTX, "phi_rad")?;
        let n: u64 = field(rec, 1, line, CTX, "n_pulses")?;
        let row = (2..width)
            .map(|i| field::<u64>(rec, i, line, CTX, cols[i]))
            .collect::<Result<Vec<_>>>()?;
        if row.iter().sum::<u64>() != n {
            return Err(Error::schema(
                CTX,
                line,
                format!("counts sum to {}, n_pulses is {n}", row.iter().sum::<u64>()),
            ));
        }
        match pulses {
            None => pulses = Some(n),
            Some(p) if p != n => {
                return Err(Error::schema(
                    CTX,
                    line,
                    format!("n_pulses {n} differs from earlier rows ({p})"),
                ));
            }
            _ => {}
        }
        phases.push(phi);
        counts.push(row);
    }
    let meta = table.tag.map(|t| t.meta).unwrap_or_default();
    let rep_rate = match meta.get("rep_rate_hz") {
        Some(v) => v
            .parse()
            .map_err(|_| Error::schema(CTX, 1, format!("bad rep_rate_hz {v:?}")))?,
        None => default_rep_rate,
    };
    let fingerprint = meta.get("fingerprint").cloned().unwrap_or_default();
    ScanResult::from_counts(phases, counts, pulses.unwrap_or(0), rep_rate, fingerprint)
}

// --- detector -------------------------------------------------------------

pub fn write_thresholds_csv<W: Write>(w: W, thresholds: &ThresholdSet) -> Result<()> {
    let rows = thresholds
        .levels()
        .iter()
        .enumerate()
        .map(|(i, l)| vec![(i + 1).to_string(), format_f64(*l)]);
    write_rows(
        w,
        tag_line("thresholds", &[]),
        &strings(&["k", "level_electrons"]),
        rows,
    )
}

pub fn read_thresholds_csv<R: Read>(r: R) -> Result<ThresholdSet> {
    const CTX: &str = "thresholds csv";
    let table = read_table(r, CTX, "thresholds")?;
    expect_header(&table, CTX, &["k", "level_electrons"])?;
    let mut levels = Vec::new();
    for (i, (line, rec)) in table.rows.iter().enumerate() {
        check_width(rec, 2, *line, CTX)?;
        let k: usize = field(rec, 0, *line, CTX, "k")?;
        if k != i + 1 {
            return Err(Error::schema(CTX, *line, format!("expected k = {}, found {k}", i + 1)));
        }
        levels.push(field::<f64>(rec, 1, *line, CTX, "level_electrons")?);
    }
    ThresholdSet::new(levels).map_err(|e| Error::schema(CTX, header_line(&table), e.to_string()))
}

pub fn write_histogram_csv<W: Write>(w: W, hist: &PulseHeightHistogram) -> Result<()> {
    let edges = hist.bin_edges();
    let rows = hist
        .counts()
        .iter()
        .enumerate()
        .map(|(i, c)| vec![format_f64(edges[i]), format_f64(edges[i + 1]), c.to_string()]);
    write_rows(
        w,
        tag_line("histogram", &[]),
        &strings(&["bin_lo_electrons", "bin_hi_electrons", "count"]),
        rows,
    )
}

pub fn read_histogram_csv<R: Read>(r: R) -> Result<PulseHeightHistogram> {
    const CTX: &str = "histogram csv";
    let table = read_table(r, CTX, "histogram")?;
    expect_header(&table, CTX, &["bin_lo_electrons", "bin_hi_electrons", "count"])?;
    let mut edges = Vec::new();
    let mut counts = Vec::new();
    for (line, rec) in &table.rows {
        check_width(rec, 3, *line, CTX)?;
        let lo: f64 = field(rec, 0, *line, CTX, "bin_lo_electrons")?;
        let hi: f64 = field(rec, 1, *line, CTX, "bin_hi_electrons")?;
        if let Some(&prev_hi) = edges.last() {
            if lo != prev_hi {
                return Err(Error::schema(CTX, *line, "bins are not contiguous"));
            }
        } else {
            edges.push(lo);
        }
        edges.push(hi);
        counts.push(field(rec, 2, *line, CTX, "count")?);
    }
    PulseHeightHistogram::new(edges, counts).map_err(|e| Error::schema(CTX, header_line(&table), e.to_string()))
}

// --- estimation -----------------------------------------------------------

pub fn write_sensitivity_csv<W: Write>(w: W, curve: &SensitivityCurve) -> Result<()> {
    let tag = tag_line(
        "sensitivity",
        &[
            ("scheme", curve.scheme.to_string()),
            ("n_max", format_f64(curve.n_max)),
            ("n_pulses", curve.n_pulses.to_string()),
        ],
    );
    let rows = curve
        .phases
        .iter()
        .zip(&curve.delta_phi)
        .map(|(p, d)| vec![format_f64(*p), format_f64(*d)]);
    write_rows(w, tag, &strings(&["phi_rad", "delta_phi"]), rows)
}

/// Returns `(phi_rad, delta_phi)` pairs.
pub fn read_sensitivity_csv<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    const CTX: &str = "sensitivity csv";
    let table = read_table(r, CTX, "sensitivity")?;
    expect_header(&table, CTX, &["phi_rad", "delta_phi"])?;
    table
        .rows
        .iter()
        .map(|(line, rec)| {
            check_width(rec, 2, *line, CTX)?;
            Ok((
                field(rec, 0, *line, CTX, "phi_rad")?,
                field(rec, 1, *line, CTX, "delta_phi")?,
            ))
        })
        .collect()
}

const FIT_COLUMNS: [&str; 5] = [
    "n_max_hat",
    "phase_offset_hat",
    "amplitude_scale_hat",
    "residual_sum_squares",
    "converged",
];

pub fn write_fit_csv<W: Write>(w: W, fit: &FitResult) -> Result<()> {
    let row = vec![
        format_f64(fit.n_max_hat),
        format_f64(fit.phase_offset_hat),
        format_f64(fit.amplitude_scale_hat),
        format_f64(fit.residual_sum_squares),
        fit.converged.to_string(),
    ];
    write_rows(w, tag_line("fit", &[]), &strings(&FIT_COLUMNS), std::iter::once(row))
}

pub fn read_fit_csv<R: Read>(r: R) -> Result<FitResult> {
    const CTX: &str = "fit csv";
    let table = read_table(r, CTX, "fit")?;
    expect_header(&table, CTX, &FIT_COLUMNS)?;
    let [(line, rec)] = table.rows.as_slice() else {
        return Err(Error::schema(CTX, header_line(&table), "expected exactly one data row"));
    };
    check_width(rec, 5, *line, CTX)?;
    Ok(FitResult {
        n_max_hat: field(rec, 0, *line, CTX, FIT_COLUMNS[0])?,
        phase_offset_hat: field(rec, 1, *line, CTX, FIT_COLUMNS[1])?,
        amplitude_scale_hat: field(rec, 2, *line, CTX, FIT_COLUMNS[2])?,
        residual_sum_squares: field(rec, 3, *line, CTX, FIT_COLUMNS[3])?,
        converged: field(rec, 4, *line, CTX, FIT_COLUMNS[4])?,
    })
}

// --- subrayleigh ----------------------------------------------------------

pub fn write_pattern_csv<W: Write>(w: W, pattern: &Pattern) -> Result<()> {
    let rows = pattern
        .phases()
        .into_iter()
        .zip(pattern.values())
        .map(|(p, v)| vec![format_f64(p), format_f64(*v)]);
    write_rows(
        w,
        tag_line("pattern", &[("points", pattern.len().to_string())]),
        &strings(&["phi_rad", "value"]),
        rows,
    )
}

pub fn read_pattern_csv<R: Read>(r: R) -> Result<Pattern> {
    const CTX: &str = "pattern csv";
    let table = read_table(r, CTX, "pattern")?;
    expect_header(&table, CTX, &["phi_rad", "value"])?;
    let mut phases = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in &table.rows {
        check_width(rec, 2, *line, CTX)?;
        phases.push(field(rec, 0, *line, CTX, "phi_rad")?);
        values.push(field(rec, 1, *line, CTX, "value")?);
    }
    Pattern::from_samples(&phases, values).map_err(|e| Error::schema(CTX, header_line(&table), e.to_string()))
}

pub fn write_spectrum_csv<W: Write>(w: W, spectrum: &HarmonicSpectrum) -> Result<()> {
    let rows = spectrum
        .magnitudes()
        .iter()
        .enumerate()
        .map(|(m, c)| vec![m.to_string(), format_f64(*c)]);
    write_rows(
        w,
        tag_line("spectrum", &[]),
        &strings(&["harmonic_m", "magnitude"]),
        rows,
    )
}

/// Returns the magnitudes indexed by harmonic.
pub fn read_spectrum_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    const CTX: &str = "spectrum csv";
    let table = read_table(r, CTX, "spectrum")?;
    expect_header(&table, CTX, &["harmonic_m", "magnitude"])?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, (line, rec))| {
            check_width(rec, 2, *line, CTX)?;
            let m: usize = field(rec, 0, *line, CTX, "harmonic_m")?;
            if m != i {
                return Err(Error::schema(CTX, *line, format!("expected harmonic {i}, found {m}")));
            }
            field(rec, 1, *line, CTX, "magnitude")
        })
        .collect()
}
