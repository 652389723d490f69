//! Synthetic eating/non-eating corpus, manifest handling, featurization, and
//! stratified split management.
//!
//! The real laboratory recordings behind the detector are private, so this
//! module fabricates a measurable stand-in: eating files are periodic chew
//! bursts (1.2 to 1.8 Hz) whose carrier energy sits in 30-120 Hz; non-eating
//! files are continuous 140-240 Hz band noise under a slow non-periodic
//! envelope. Both get white noise 20 dB down and a 0.9 peak. The classes
//! separate cleanly in the 65-bin feature space (eating windows have the
//! lower spectral centroid), which is what the training pipeline needs the
//! corpus to guarantee.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dsp::{extract_features, AudioSignal, DspError, FeatureWindow, RAW_RATE};
use crate::rng::XorShift64Star;
use crate::wav::{load_wav, write_wav_16bit, WavError};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Duration of every generated corpus file.
pub const FILE_DURATION_S: f64 = 120.0;
/// Shortest synthesizable signal: one analysis window.
pub const MIN_DURATION_S: f64 = 4.0;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("duration {got} s too short, need at least {min} s")]
    DurationTooShort { min: f64, got: f64 },
    #[error("file counts must be at least 1 per class")]
    ZeroFiles,
    #[error("manifest line {line}: {reason}")]
    ManifestRow { line: usize, reason: String },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: WavError,
    },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("split ratios must be positive and sum to 1, got ({0}, {1}, {2})")]
    BadRatios(f64, f64, f64),
    #[error("not enough examples to fill train/validation/test: {0}")]
    InsufficientExamples(&'static str),
    #[error("corpus I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// One labeled feature window. `source` identifies the originating file so
/// splits can stay disjoint at file granularity.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub features: FeatureWindow,
    pub label: usize,
    pub source: String,
}

/// Train/validation/test example lists, disjoint by source file.
#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub train: Vec<LabeledExample>,
    pub validation: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

/// Adds `amp * env(t) * sin(2 pi f t + phase)` into `out` using a complex
/// rotation recurrence, avoiding a trig call per sample. `env` receives the
/// sample index.
fn add_tone(out: &mut [f64], f_hz: f64, phase: f64, amp: f64, env: impl Fn(usize) -> f64) {
    let step = 2.0 * std::f64::consts::PI * f_hz / RAW_RATE as f64;
    let (step_cos, step_sin) = (step.cos(), step.sin());
    let (mut re, mut im) = (phase.cos(), phase.sin());
    for (k, o) in out.iter_mut().enumerate() {
        *o += amp * env(k) * im;
        let next_re = re * step_cos - im * step_sin;
        im = re * step_sin + im * step_cos;
        re = next_re;
    }
}

/// Scales so the peak magnitude equals `target`.
fn normalize_peak(samples: &mut [f64], target: f64) {
    let peak = samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    debug_assert!(peak > 0.0);
    let g = target / peak;
    for s in samples.iter_mut() {
        *s *= g;
    }
}

fn check_duration(duration_s: f64) -> Result<usize, CorpusError> {
    if !(duration_s >= MIN_DURATION_S) {
        return Err(CorpusError::DurationTooShort {
            min: MIN_DURATION_S,
            got: duration_s,
        });
    }
    Ok((duration_s * RAW_RATE as f64).round() as usize)
}

/// Chewing surrogate: Hann-enveloped multi-partial bursts repeating at a
/// seeded 1.2-1.8 Hz rate, carriers in 30-120 Hz, plus white noise 20 dB
/// below the unit-normalized signal, peak renormalized to 0.9.
pub fn synth_eating(seed: u64, duration_s: f64) -> Result<AudioSignal, CorpusError> {
    let n = check_duration(duration_s)?;
    let mut rng = XorShift64Star::new(seed);
    let mut s = vec![0.0; n];
    let mut onset_s = rng.uniform(0.05, 0.3);
    while onset_s < duration_s {
        let chew_rate = rng.uniform(1.2, 1.8);
        let burst_len_s = rng.uniform(0.18, 0.32);
        let burst_amp = rng.uniform(0.6, 1.0);
        let start = (onset_s * RAW_RATE as f64) as usize;
        let len = ((burst_len_s * RAW_RATE as f64) as usize).min(n - start);
        let burst = &mut s[start..start + len];
        for _ in 0..3 {
            let f = rng.uniform(30.0, 120.0);
            let phase = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
            let amp = burst_amp * rng.uniform(0.5, 1.0) / 3.0;
            let hann = move |k: usize| {
                0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / len as f64).cos())
            };
            add_tone(burst, f, phase, amp, hann);
        }
        onset_s += 1.0 / chew_rate;
    }
    normalize_peak(&mut s, 1.0);
    for v in s.iter_mut() {
        *v += rng.uniform(-0.1, 0.1);
    }
    normalize_peak(&mut s, 0.9);
    Ok(AudioSignal::new(s, RAW_RATE)?)
}

/// Non-eating surrogate: a 40-oscillator band of 140-240 Hz noise under a
/// slow envelope built from incommensurate sinusoids (so it never repeats),
/// same noise floor and 0.9 peak as the eating class.
pub fn synth_noneating(seed: u64, duration_s: f64) -> Result<AudioSignal, CorpusError> {
    let n = check_duration(duration_s)?;
    let mut rng = XorShift64Star::new(seed);
    let mut s = vec![0.0; n];
    for _ in 0..40 {
        let f = rng.uniform(140.0, 240.0);
        let phase = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
        let amp = rng.uniform(0.5, 1.0) / 40.0;
        add_tone(&mut s, f, phase, amp, |_| 1.0);
    }
    let phases = [
        rng.uniform(0.0, 2.0 * std::f64::consts::PI),
        rng.uniform(0.0, 2.0 * std::f64::consts::PI),
        rng.uniform(0.0, 2.0 * std::f64::consts::PI),
    ];
    for (k, v) in s.iter_mut().enumerate() {
        let t = k as f64 / RAW_RATE as f64;
        let tau = 2.0 * std::f64::consts::PI * t;
        let env = 1.0
            + 0.35 * (tau * 0.071 + phases[0]).sin()
            + 0.25 * (tau * 0.113 + phases[1]).sin()
            + 0.18 * (tau * 0.197 + phases[2]).sin();
        *v *= env;
    }
    normalize_peak(&mut s, 1.0);
    for v in s.iter_mut() {
        *v += rng.uniform(-0.1, 0.1);
    }
    normalize_peak(&mut s, 0.9);
    Ok(AudioSignal::new(s, RAW_RATE)?)
}

/// Writes `n_eat` eating plus `n_non` non-eating 120-second WAV files under
/// `out_dir` along with a `manifest.csv` of `path,label` rows. Returns the
/// manifest path. Rebuilding with the same seed reproduces identical bytes.
pub fn build_corpus(
    n_eat: usize,
    n_non: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<PathBuf, CorpusError> {
    if n_eat == 0 || n_non == 0 {
        return Err(CorpusError::ZeroFiles);
    }
    fs::create_dir_all(out_dir)?;
    // per-file seeds are drawn up front so generation order cannot matter
    let mut rng = XorShift64Star::new(seed);
    let mut specs: Vec<(String, usize, u64)> = Vec::with_capacity(n_eat + n_non);
    for i in 0..n_eat {
        specs.push((format!("eat_{i:03}.wav"), 1, rng.next_u64()));
    }
    for i in 0..n_non {
        specs.push((format!("non_{i:03}.wav"), 0, rng.next_u64()));
    }

    let synth_one = |(name, label, file_seed): &(String, usize, u64)| -> Result<(), CorpusError> {
        let signal = if *label == 1 {
            synth_eating(*file_seed, FILE_DURATION_S)?
        } else {
            synth_noneating(*file_seed, FILE_DURATION_S)?
        };
        write_wav_16bit(&out_dir.join(name), &signal).map_err(|source| CorpusError::File {
            path: out_dir.join(name),
            source,
        })
    };
    #[cfg(feature = "parallel")]
    specs.par_iter().try_for_each(synth_one)?;
    #[cfg(not(feature = "parallel"))]
    specs.iter().try_for_each(synth_one)?;

    let mut manifest = String::from("path,label\n");
    for (name, label, _) in &specs {
        manifest.push_str(&format!("{name},{label}\n"));
    }
    let manifest_path = out_dir.join("manifest.csv");
    fs::write(&manifest_path, manifest)?;
    Ok(manifest_path)
}

/// Parses a `path,label` manifest. Relative paths resolve against the
/// manifest's directory. Errors carry 1-based line numbers.
pub fn load_manifest(path: &Path) -> Result<Vec<(PathBuf, usize)>, CorpusError> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "path,label" => {}
        Some((_, header)) => {
            return Err(CorpusError::ManifestRow {
                line: 1,
                reason: format!("expected header \"path,label\", got {header:?}"),
            })
        }
        None => {
            return Err(CorpusError::ManifestRow {
                line: 1,
                reason: "empty manifest".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let (file, label_text) = row.rsplit_once(',').ok_or_else(|| CorpusError::ManifestRow {
            line,
            reason: "expected \"path,label\"".into(),
        })?;
        let label = match label_text.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(CorpusError::ManifestRow {
                    line,
                    reason: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        let file_path = PathBuf::from(file.trim());
        let resolved = if file_path.is_absolute() {
            file_path
        } else {
            base.join(file_path)
        };
        out.push((resolved, label));
    }
    Ok(out)
}

fn featurize_one(path: &Path, label: usize) -> Result<Vec<LabeledExample>, CorpusError> {
    let signal = load_wav(path).map_err(|source| CorpusError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let source = path.display().to_string();
    Ok(extract_features(&signal)?
        .into_iter()
        .map(|features| LabeledExample {
            features,
            label,
            source: source.clone(),
        })
        .collect())
}

/// Runs the full audio front end over every manifest entry; each complete
/// 4-second window becomes one example carrying its file's label. File order
/// in the output matches the input list regardless of parallelism.
pub fn featurize(files: &[(PathBuf, usize)]) -> Result<Vec<LabeledExample>, CorpusError> {
    #[cfg(feature = "parallel")]
    let per_file: Result<Vec<Vec<LabeledExample>>, CorpusError> = files
        .par_iter()
        .map(|(p, l)| featurize_one(p, *l))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let per_file: Result<Vec<Vec<LabeledExample>>, CorpusError> =
        files.iter().map(|(p, l)| featurize_one(p, *l)).collect();
    Ok(per_file?.into_iter().flatten().collect())
}

/// Single-threaded [`featurize`], kept unconditionally for benchmarking the
/// parallel speedup.
pub fn featurize_serial(files: &[(PathBuf, usize)]) -> Result<Vec<LabeledExample>, CorpusError> {
    let per_file: Result<Vec<Vec<LabeledExample>>, CorpusError> =
        files.iter().map(|(p, l)| featurize_one(p, *l)).collect();
    Ok(per_file?.into_iter().flatten().collect())
}

/// Largest-remainder allocation of `count` items over three ratio buckets.
/// Remainder ties prefer the bucket whose running global count lags its
/// target most (`deficits`), then lower bucket index; this keeps the
/// per-label allocations globally balanced when labels tie symmetrically.
fn allocate(count: usize, ratios: (f64, f64, f64), deficits: [f64; 3]) -> [usize; 3] {
    let quotas = [
        ratios.0 * count as f64,
        ratios.1 * count as f64,
        ratios.2 * count as f64,
    ];
    let mut counts = [
        quotas[0].floor() as usize,
        quotas[1].floor() as usize,
        quotas[2].floor() as usize,
    ];
    let mut leftover = count - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra)
            .unwrap()
            .then(deficits[b].partial_cmp(&deficits[a]).unwrap())
            .then(a.cmp(&b))
    });
    for &i in &order {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    counts
}

/// Stratified train/validation/test split at file granularity: all windows
/// of a source file land in the same split, files are shuffled per label
/// under `seed`, and per-label file counts follow largest-remainder
/// rounding of the ratios.
pub fn split(
    examples: Vec<LabeledExample>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplits, CorpusError> {
    let (r0, r1, r2) = ratios;
    if !(r0 > 0.0 && r1 > 0.0 && r2 > 0.0) || ((r0 + r1 + r2) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(r0, r1, r2));
    }
    // group windows by source, preserving first-seen order
    let mut groups: Vec<(String, usize, Vec<LabeledExample>)> = Vec::new();
    for ex in examples {
        match groups.iter_mut().find(|(s, _, _)| *s == ex.source) {
            Some((_, label, list)) => {
                debug_assert_eq!(*label, ex.label, "source with mixed labels");
                list.push(ex);
            }
            None => groups.push((ex.source.clone(), ex.label, vec![ex])),
        }
    }
    let mut rng = XorShift64Star::new(seed);
    let mut splits: [Vec<LabeledExample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut assigned_files = [0usize; 3];
    let mut files_so_far = 0usize;
    for label in [0usize, 1] {
        let mut idx: Vec<usize> = groups
            .iter()
            .enumerate()
            .filter(|(_, (_, l, _))| *l == label)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        rng.shuffle(&mut idx);
        files_so_far += idx.len();
        let targets = [r0, r1, r2].map(|r| r * files_so_far as f64);
        let deficits = [
            targets[0] - assigned_files[0] as f64,
            targets[1] - assigned_files[1] as f64,
            targets[2] - assigned_files[2] as f64,
        ];
        let counts = allocate(idx.len(), ratios, deficits);
        let mut cursor = 0;
        for (si, &c) in counts.iter().enumerate() {
            for &gi in &idx[cursor..cursor + c] {
                splits[si].extend(groups[gi].2.drain(..));
            }
            assigned_files[si] += c;
            cursor += c;
        }
    }
    let [train, validation, test] = splits;
    if train.is_empty() || validation.is_empty() || test.is_empty() {
        return Err(CorpusError::InsufficientExamples(
            "a split came out empty; provide more source files",
        ));
    }
    let labels: Vec<usize> = train.iter().map(|e| e.label).collect();
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(CorpusError::InsufficientExamples(
            "training split must contain both classes",
        ));
    }
    Ok(DatasetSplits {
        train,
        validation,
        test,
    })
}
