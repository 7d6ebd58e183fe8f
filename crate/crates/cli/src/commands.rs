use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fockscan::detector::{
    calibrate_thresholds, scan_histogram, simulate_heights, DetectorModel, LevelSweep, ReferenceWeights, ThresholdSet,
};
use fockscan::estimation::{fit_nmax, optimal_phase, sensitivity_curve, single_photon_model, Scheme};
use fockscan::experiment::{
    periodic_phase_grid, run_scan, run_scan_with_workers, ScanConfig, DEFAULT_PHASE_POINTS, DEFAULT_REP_RATE,
};
use fockscan::io;
use fockscan::quantum::expected_rate;
use fockscan::subrayleigh::{
    fringe_spacing, harmonic_spectrum, superimpose, visibility, Pattern, DEFAULT_PATTERN_POINTS,
};

use crate::cli::{CalibrateArgs, FitArgs, ScanArgs, SensitivityArgs, SubrayleighArgs};
use crate::config::{
    detector_model, detector_table, reference_choice, reference_fields, timestamp, to_toml, CalibrateTable, CliError,
    CliResult, ConfigFile, DerivedTable, FitTable, ReferenceChoice, ScanTable, SensitivityTable, SubrayleighTable,
    ARTIFACT_VERSION,
};
use crate::svg::{Chart, Series};

const DEFAULT_NMAX: f64 = 3.95;
const DEFAULT_K_MAX: usize = 7;
const DEFAULT_SEED: u64 = 1;

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> fockscan::Result<()>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| match e {
        fockscan::Error::Io(io) => CliError::io(path, io),
        other => other.into(),
    })?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn write_plot(dir: &Path, name: &str, chart: &Chart) -> CliResult<PathBuf> {
    let plots = dir.join("plots");
    prepare_dir(&plots)?;
    let path = plots.join(name);
    write_text(&path, &chart.render())?;
    Ok(path)
}

/// Calibrates with the requested weights. A defaulted Poisson reference that
/// cannot separate every pair falls back to equal weights with a warning.
fn calibrate(
    model: &DetectorModel,
    k_max: usize,
    choice: ReferenceChoice,
) -> CliResult<(ThresholdSet, ReferenceWeights)> {
    match calibrate_thresholds(model, k_max, choice.weights) {
        Ok(t) => Ok((t, choice.weights)),
        Err(e @ fockscan::Error::Calibration { .. }) if !choice.explicit => {
            eprintln!("warning: {e}; placing thresholds with equal peak weights instead");
            let t = calibrate_thresholds(model, k_max, ReferenceWeights::Uniform)?;
            Ok((t, ReferenceWeights::Uniform))
        }
        Err(e) => Err(e.into()),
    }
}

fn check_n_max(n_max: f64) -> CliResult<()> {
    if n_max.is_finite() && n_max >= 0.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "n_max must be finite and non-negative, got {n_max}"
        )))
    }
}

fn fine_grid(points: usize) -> Vec<f64> {
    (0..=points).map(|i| 2.0 * PI * i as f64 / points as f64).collect()
}

pub fn scan(args: ScanArgs, file: ConfigFile) -> CliResult<()> {
    let t = file.scan.clone().unwrap_or_default();
    let n_max = args.nmax.or(t.n_max).unwrap_or(DEFAULT_NMAX);
    let pulses = args.pulses.or(t.pulses).unwrap_or(100_000);
    let points = args.points.or(t.points).unwrap_or(DEFAULT_PHASE_POINTS);
    let seed = args.seed.or(t.seed).or(file.master_seed).unwrap_or(DEFAULT_SEED);
    let rep_rate = args.rep_rate.or(t.rep_rate).unwrap_or(DEFAULT_REP_RATE);
    let k_max = args.k_max.or(t.k_max).unwrap_or(DEFAULT_K_MAX);
    let detector = detector_model(&args.detector, file.detector.as_ref());
    detector.validate()?;
    if k_max == 0 {
        return Err(CliError::Config("k_max must be at least 1".into()));
    }
    check_n_max(n_max)?;
    let choice = reference_choice(&args.reference, t.reference, t.reference_mean, n_max);
    let (thresholds, weights) = calibrate(&detector, k_max, choice)?;

    let config = ScanConfig {
        n_max,
        rep_rate,
        pulses_per_point: pulses,
        phases: periodic_phase_grid(points),
        detector,
        thresholds: thresholds.clone(),
        master_seed: seed,
    };
    config.validate()?;
    for w in config.warnings() {
        eprintln!("warning: {w}");
    }
    let result = match args.workers {
        Some(w) => run_scan_with_workers(&config, w)?,
        None => run_scan(&config)?,
    };

    prepare_dir(&args.out)?;
    let csv_path = args.out.join("scan.csv");
    write_file(&csv_path, |w| io::write_scan_csv(w, &result))?;

    let (reference, reference_mean) = reference_fields(weights);
    let meta = ConfigFile {
        artifact_version: Some(ARTIFACT_VERSION),
        command: Some("scan".into()),
        timestamp: Some(timestamp()),
        master_seed: Some(seed),
        fingerprint: Some(result.config_fingerprint.clone()),
        scan: Some(ScanTable {
            n_max: Some(n_max),
            pulses: Some(pulses),
            points: Some(points),
            seed: Some(seed),
            rep_rate: Some(rep_rate),
            k_max: Some(k_max),
            reference: Some(reference),
            reference_mean,
        }),
        detector: Some(detector_table(&detector)),
        derived: Some(DerivedTable {
            thresholds: thresholds.levels().to_vec(),
        }),
        ..ConfigFile::default()
    };
    write_text(&args.out.join("meta.txt"), &to_toml(&meta)?)?;

    if args.plots {
        let fine = fine_grid(400);
        for k in 1..=k_max {
            let mut chart = Chart::new(
                format!("{k}-photon count rate, n_max = {n_max}"),
                "phase φ (rad)",
                "rate (Hz)",
            );
            chart.series.push(Series::markers(
                "simulated",
                result.phases.iter().copied().zip(result.rates(k)).collect(),
            ));
            chart.series.push(Series::line(
                "closed form",
                fine.iter()
                    .map(|&p| (p, expected_rate(k as u64, n_max, p, rep_rate)))
                    .collect(),
            ));
            write_plot(&args.out, &format!("scan_k{k}.svg"), &chart)?;
        }
    }
    println!(
        "scan: {points} phases × {pulses} pulses, n_max = {n_max}, K = {k_max}, seed = {seed} → {}",
        csv_path.display()
    );
    println!("fingerprint {}", result.config_fingerprint);
    Ok(())
}

pub fn calibrate_cmd(args: CalibrateArgs, file: ConfigFile) -> CliResult<()> {
    let t = file.calibrate.clone().unwrap_or_default();
    let n_max = args.nmax.or(t.n_max).unwrap_or(DEFAULT_NMAX);
    let pulses = args.pulses.or(t.pulses).unwrap_or(200_000);
    let seed = args.seed.or(t.seed).or(file.master_seed).unwrap_or(DEFAULT_SEED);
    let k_max = args.k_max.or(t.k_max).unwrap_or(DEFAULT_K_MAX);
    let detector = detector_model(&args.detector, file.detector.as_ref());
    detector.validate()?;
    if k_max == 0 {
        return Err(CliError::Config("k_max must be at least 1".into()));
    }
    check_n_max(n_max)?;
    let bin_width = args.bin_width.or(t.bin_width).unwrap_or(0.01 * detector.gain);
    let sweep = LevelSweep::covering(-0.5 * detector.gain, (k_max as f64 + 2.0) * detector.gain, bin_width)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let choice = reference_choice(&args.reference, t.reference, t.reference_mean, n_max);
    let (thresholds, weights) = calibrate(&detector, k_max, choice)?;
    let hist = scan_histogram(simulate_heights(&detector, n_max, pulses, seed), sweep);

    prepare_dir(&args.out)?;
    write_file(&args.out.join("thresholds.csv"), |w| {
        io::write_thresholds_csv(w, &thresholds)
    })?;
    write_file(&args.out.join("histogram.csv"), |w| io::write_histogram_csv(w, &hist))?;
    let (reference, reference_mean) = reference_fields(weights);
    let meta = ConfigFile {
        artifact_version: Some(ARTIFACT_VERSION),
        command: Some("calibrate".into()),
        timestamp: Some(timestamp()),
        master_seed: Some(seed),
        calibrate: Some(CalibrateTable {
            n_max: Some(n_max),
            pulses: Some(pulses),
            seed: Some(seed),
            k_max: Some(k_max),
            bin_width: Some(bin_width),
            reference: Some(reference),
            reference_mean,
        }),
        detector: Some(detector_table(&detector)),
        derived: Some(DerivedTable {
            thresholds: thresholds.levels().to_vec(),
        }),
        ..ConfigFile::default()
    };
    write_text(&args.out.join("meta.txt"), &to_toml(&meta)?)?;

    if args.plots {
        let mut chart = Chart::new(
            format!("pulse-height histogram, n = {n_max}"),
            "pulse height (electrons)",
            "pulses per window",
        );
        chart.series.push(Series::line(
            "counts",
            (0..hist.counts().len())
                .map(|i| (hist.bin_centre(i), hist.counts()[i] as f64))
                .collect(),
        ));
        chart.vlines = thresholds.levels().to_vec();
        write_plot(&args.out, "histogram.svg", &chart)?;
    }
    let levels: Vec<String> = thresholds.levels().iter().map(|l| format!("{l:.4}")).collect();
    println!("thresholds (electrons): {}", levels.join(", "));
    // peaks are one gain apart; look for maxima over a quarter-gain window
    let half_window = ((0.25 * detector.gain / bin_width).round() as usize).max(1);
    let peaks = hist.local_maxima(half_window, pulses / 1000 + 1).len();
    println!("histogram: {} pulses in sweep, {peaks} resolved peaks", hist.total());
    Ok(())
}

pub fn fit(args: FitArgs, file: ConfigFile) -> CliResult<()> {
    let t = file.fit.clone().unwrap_or_default();
    let rep_rate = args.rep_rate.or(t.rep_rate).unwrap_or(DEFAULT_REP_RATE);
    let result = io::read_scan_csv(open(&args.input)?, rep_rate).map_err(|e| match e {
        fockscan::Error::Schema { .. } => CliError::Io(format!("{}: {e}", args.input.display())),
        other => other.into(),
    })?;
    let fit = fit_nmax(&result)?;
    prepare_dir(&args.out)?;
    write_file(&args.out.join("fit.csv"), |w| io::write_fit_csv(w, &fit))?;
    let meta = ConfigFile {
        artifact_version: Some(ARTIFACT_VERSION),
        command: Some("fit".into()),
        timestamp: Some(timestamp()),
        fingerprint: (!result.config_fingerprint.is_empty()).then(|| result.config_fingerprint.clone()),
        fit: Some(FitTable {
            rep_rate: Some(rep_rate),
        }),
        ..ConfigFile::default()
    };
    write_text(&args.out.join("meta.txt"), &to_toml(&meta)?)?;
    if args.plots {
        let mut chart = Chart::new("single-photon rate fit", "phase φ (rad)", "rate (Hz)");
        chart.series.push(Series::markers(
            "data",
            result.phases.iter().copied().zip(result.rates(1)).collect(),
        ));
        chart.series.push(Series::line(
            format!("fit, n_max = {:.4}", fit.n_max_hat),
            fine_grid(400)
                .into_iter()
                .map(|p| {
                    (
                        p,
                        single_photon_model(p, fit.n_max_hat, fit.phase_offset_hat, fit.amplitude_scale_hat),
                    )
                })
                .collect(),
        ));
        write_plot(&args.out, "fit.svg", &chart)?;
    }
    if !fit.converged {
        eprintln!("warning: fit did not converge; reporting the best point found");
    }
    println!(
        "n_max = {:.6}, phase offset = {:.6} rad, amplitude = {:.6e}, rss = {:.6e}, converged = {}",
        fit.n_max_hat, fit.phase_offset_hat, fit.amplitude_scale_hat, fit.residual_sum_squares, fit.converged
    );
    Ok(())
}

pub fn sensitivity(args: SensitivityArgs, file: ConfigFile) -> CliResult<()> {
    let t = file.sensitivity.clone().unwrap_or_default();
    let n_max = args.nmax.or(t.n_max).unwrap_or(4.0);
    let ks = if args.k.is_empty() {
        t.k.unwrap_or_else(|| vec![1, 2, 4])
    } else {
        args.k.clone()
    };
    let n_pulses = args.pulses.or(t.pulses).unwrap_or(1);
    let points = args.points.or(t.points).unwrap_or(1000);
    if points < 2 {
        return Err(CliError::Config("need at least 2 grid points".into()));
    }
    if ks.contains(&0) {
        return Err(CliError::Config("Fock readouts start at k = 1".into()));
    }
    // open grid over (0, 2π): avoids the removable point at φ = 0
    let phases: Vec<f64> = (1..=points)
        .map(|i| 2.0 * PI * i as f64 / (points + 1) as f64)
        .collect();
    let schemes: Vec<Scheme> = std::iter::once(Scheme::MeanPhoton)
        .chain(ks.iter().map(|&k| Scheme::Fock(k)))
        .collect();

    prepare_dir(&args.out)?;
    let mut chart = Chart::new(
        format!("phase sensitivity, n_max = {n_max}, N = {n_pulses}"),
        "phase φ (rad)",
        "Δφ (rad)",
    );
    chart.log_y = true;
    let mut floor = f64::INFINITY;
    for &scheme in &schemes {
        let curve = sensitivity_curve(scheme, n_max, &phases, n_pulses)?;
        let path = args.out.join(format!("sensitivity_{scheme}.csv"));
        write_file(&path, |w| io::write_sensitivity_csv(w, &curve))?;
        floor = curve.delta_phi.iter().copied().fold(floor, f64::min);
        chart.series.push(Series::line(
            scheme.to_string(),
            phases.iter().copied().zip(curve.delta_phi).collect(),
        ));
        match scheme {
            Scheme::Fock(k) => {
                let best = optimal_phase(k, n_max, n_pulses)?;
                let value = fockscan::estimation::sensitivity_fock(k, n_max, best, n_pulses)?;
                println!(
                    "{scheme}: best phase {best:.6} rad, Δφ = {value:.6e} → {}",
                    path.display()
                );
            }
            Scheme::MeanPhoton => println!("{scheme}: best Δφ = {:.6e} at φ → 0 → {}", floor, path.display()),
        }
    }
    let meta = ConfigFile {
        artifact_version: Some(ARTIFACT_VERSION),
        command: Some("sensitivity".into()),
        timestamp: Some(timestamp()),
        sensitivity: Some(SensitivityTable {
            n_max: Some(n_max),
            k: Some(ks),
            pulses: Some(n_pulses),
            points: Some(points),
        }),
        ..ConfigFile::default()
    };
    write_text(&args.out.join("meta.txt"), &to_toml(&meta)?)?;
    if args.plots && floor.is_finite() {
        chart.y_range = Some((0.5 * floor, 100.0 * floor));
        write_plot(&args.out, "sensitivity.svg", &chart)?;
    }
    Ok(())
}

pub fn subrayleigh(args: SubrayleighArgs, file: ConfigFile) -> CliResult<()> {
    let t = file.subrayleigh.clone().unwrap_or_default();
    let k = args.k.or(t.k).unwrap_or(7);
    let n_max = args.nmax.or(t.n_max).unwrap_or(DEFAULT_NMAX);
    let points = args.points.or(t.points).unwrap_or(DEFAULT_PATTERN_POINTS);
    let shifts = if args.shifts.is_empty() {
        t.shifts.unwrap_or_else(|| vec![1, 2, 3, 5])
    } else {
        args.shifts.clone()
    };
    let wavelength = args.wavelength.or(t.wavelength).unwrap_or(780.0);
    let normalize = args.normalize || t.normalize.unwrap_or(false);
    if shifts.contains(&0) {
        return Err(CliError::Config("shift counts must be at least 1".into()));
    }

    let (base, source) = match &args.input {
        Some(path) => {
            let scan = io::read_scan_csv(open(path)?, DEFAULT_REP_RATE).map_err(|e| match e {
                fockscan::Error::Schema { .. } => CliError::Io(format!("{}: {e}", path.display())),
                other => other.into(),
            })?;
            (Pattern::from_scan(&scan, k)?, format!("p̂_{k} from {}", path.display()))
        }
        None => (
            Pattern::analytic_rate(k as u64, n_max, points)?,
            format!("R_{k}/R_rep, n_max = {n_max}"),
        ),
    };
    for &n in &shifts {
        if base.len() % n != 0 {
            return Err(CliError::Config(format!(
                "{n} shifts do not divide the {}-point grid",
                base.len()
            )));
        }
    }

    prepare_dir(&args.out)?;
    let mut chart = Chart::new(
        format!("shifted superpositions of {source}"),
        "phase φ (rad)",
        "pattern",
    );
    println!("base: {source}, {} points", base.len());
    for &n in &shifts {
        let mut sum = superimpose(&base, n)?;
        if normalize {
            sum = sum.scaled(1.0 / n as f64)?;
        }
        let spectrum = harmonic_spectrum(&sum);
        write_file(&args.out.join(format!("pattern_n{n}.csv")), |w| {
            io::write_pattern_csv(w, &sum)
        })?;
        write_file(&args.out.join(format!("spectrum_n{n}.csv")), |w| {
            io::write_spectrum_csv(w, &spectrum)
        })?;
        let spacing = fringe_spacing(&sum, wavelength)
            .map(|s| format!("{s:.3} nm"))
            .unwrap_or_else(|_| "flat".into());
        println!(
            "n = {n}: dominant harmonic {}, fringe spacing {spacing}, visibility {:.4}",
            spectrum.dominant_harmonic().map_or("-".into(), |m| m.to_string()),
            visibility(&sum)
        );
        chart.series.push(Series::line(
            format!("{n} copies"),
            sum.phases().into_iter().zip(sum.values().iter().copied()).collect(),
        ));
    }
    let meta = ConfigFile {
        artifact_version: Some(ARTIFACT_VERSION),
        command: Some("subrayleigh".into()),
        timestamp: Some(timestamp()),
        subrayleigh: Some(SubrayleighTable {
            k: Some(k),
            n_max: args.input.is_none().then_some(n_max),
            points: args.input.is_none().then_some(points),
            shifts: Some(shifts),
            wavelength: Some(wavelength),
            normalize: Some(normalize),
        }),
        ..ConfigFile::default()
    };
    write_text(&args.out.join("meta.txt"), &to_toml(&meta)?)?;
    if args.plots {
        write_plot(&args.out, "subrayleigh.svg", &chart)?;
    }
    Ok(())
}
