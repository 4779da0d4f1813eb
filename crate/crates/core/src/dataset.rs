//! Sharded clean/noisy pair datasets with a JSON-Lines manifest.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.jsonl
//! shard_0000/pair_000000_clean.fsraw
//! shard_0000/pair_000000_noisy.fsraw
//! ...
//! ```
//!
//! The manifest is a header record, one record per pair (or per skipped
//! pair) in pair-id order, and a closing totals record. While a build is
//! running, finished pairs are appended to `manifest.partial.jsonl`; a
//! re-run picks up every pair listed there whose files still verify.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::NoiseProfile;
use crate::error::{Error, Result};
use crate::image::{BayerImage, CfaPattern};
use crate::noise::{self, ClampPolicy, InjectionConfig};
use crate::rawio::{self, RawLevels};
use crate::rng::{fnv1a64, Rng};
use crate::scene::{self, GeneratorConfig};
use crate::unprocess::{self, IspParams, IspRandomization};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const PARTIAL_MANIFEST_FILE: &str = "manifest.partial.jsonl";
pub const DEFAULT_SHARD_SIZE: usize = 1000;
/// Pairs whose id is a multiple of this are regenerated during verify.
pub const SPOT_CHECK_STRIDE: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub count: usize,
    pub seed: u64,
    pub scene: GeneratorConfig,
    /// Each pair draws one of these uniformly.
    pub profiles: Vec<NoiseProfile>,
    pub isp: IspRandomization,
    /// Each pair draws one of these uniformly.
    pub patterns: Vec<CfaPattern>,
    pub gain_range: (f64, f64),
    pub clamp: ClampPolicy,
    pub levels: RawLevels,
    pub shard_size: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 0,
            scene: GeneratorConfig::default(),
            profiles: vec![NoiseProfile::uniform("synthetic", "default", 0.01, 0.0004)],
            isp: IspRandomization::default(),
            patterns: vec![CfaPattern::Rggb],
            gain_range: noise::DEFAULT_GAIN_RANGE,
            clamp: ClampPolicy::Clamp,
            levels: RawLevels::default(),
            shard_size: DEFAULT_SHARD_SIZE,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.profiles.is_empty() {
            return Err(Error::config("no noise profiles"));
        }
        for p in &self.profiles {
            p.validate()?;
        }
        if self.patterns.is_empty() {
            return Err(Error::config("no CFA patterns"));
        }
        if self.isp.ccm_basis.is_empty() {
            return Err(Error::config("empty CCM basis"));
        }
        noise::validate_gain_range(self.gain_range)?;
        if self.clamp == ClampPolicy::None {
            return Err(Error::config("RAW files cannot hold unclamped samples; use clamp policy \"clamp\""));
        }
        self.levels.validate()?;
        if self.shard_size == 0 {
            return Err(Error::config("shard size must be positive"));
        }
        Ok(())
    }

    /// FNV-1a over the canonical JSON form, as 16 hex digits.
    pub fn hash(&self) -> String {
        hex(fnv1a64(serde_json::to_string(self).expect("config serializes").as_bytes()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn hex(v: u64) -> String {
    format!("{v:016x}")
}

pub fn checksum(bytes: &[u8]) -> String {
    hex(fnv1a64(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    /// Relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub checksum: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub config_hash: String,
    pub config: BuildConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: u64,
    pub scene_seed: u64,
    pub pattern: CfaPattern,
    pub isp: IspParams,
    /// Index into the header's profile list.
    pub profile_index: usize,
    pub profile: String,
    pub gain_scale: f64,
    pub clamp: ClampPolicy,
    pub clean: FileRef,
    pub noisy: FileRef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub pair_id: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub pairs: usize,
    pub skipped: usize,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum ManifestRecord {
    Header(ManifestHeader),
    Pair(PairRecord),
    Skipped(SkippedRecord),
    Totals(Totals),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub pairs: Vec<PairRecord>,
    pub skipped: Vec<SkippedRecord>,
    pub totals: Totals,
}

impl DatasetManifest {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut push = |r: ManifestRecord| -> Result<()> {
            out.push_str(&serde_json::to_string(&r)?);
            out.push('\n');
            Ok(())
        };
        push(ManifestRecord::Header(self.header.clone()))?;
        // interleave pairs and skips by id
        let mut pairs = self.pairs.iter().peekable();
        let mut skips = self.skipped.iter().peekable();
        loop {
            let next_pair = pairs.peek().map(|p| p.pair_id);
            let next_skip = skips.peek().map(|s| s.pair_id);
            match (next_pair, next_skip) {
                (Some(p), Some(s)) if s < p => push(ManifestRecord::Skipped(skips.next().unwrap().clone()))?,
                (Some(_), _) => push(ManifestRecord::Pair(pairs.next().unwrap().clone()))?,
                (None, Some(_)) => push(ManifestRecord::Skipped(skips.next().unwrap().clone()))?,
                (None, None) => break,
            }
        }
        push(ManifestRecord::Totals(self.totals.clone()))?;
        Ok(out)
    }

    /// Strict reader: requires a header first and a totals record last.
    pub fn read(path: &Path) -> Result<Self> {
        let (header, pairs, skipped, totals) = read_records(path)?;
        let totals = totals.ok_or_else(|| format_err(path, "missing totals record"))?;
        Ok(Self {
            header,
            pairs,
            skipped,
            totals,
        })
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

type Records = (ManifestHeader, Vec<PairRecord>, Vec<SkippedRecord>, Option<Totals>);

fn read_records(path: &Path) -> Result<Records> {
    let f = fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut header = None;
    let (mut pairs, mut skipped, mut totals) = (Vec::new(), Vec::new(), None);
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| format_err(path, format!("line {}: {e}", i + 1)))?;
        if totals.is_some() {
            return Err(format_err(path, format!("line {}: record after totals", i + 1)));
        }
        match (rec, header.is_some()) {
            (ManifestRecord::Header(h), false) => header = Some(h),
            (ManifestRecord::Header(_), true) => return Err(format_err(path, "duplicate header")),
            (_, false) => return Err(format_err(path, "first record is not a header")),
            (ManifestRecord::Pair(p), true) => pairs.push(p),
            (ManifestRecord::Skipped(s), true) => skipped.push(s),
            (ManifestRecord::Totals(t), true) => totals = Some(t),
        }
    }
    let header = header.ok_or_else(|| format_err(path, "empty manifest"))?;
    if header.format_version != MANIFEST_FORMAT_VERSION {
        return Err(format_err(path, format!("unsupported format version {}", header.format_version)));
    }
    Ok((header, pairs, skipped, totals))
}

/// Everything drawn for one pair before any pixels are produced.
#[derive(Clone, Debug)]
pub struct PairPlan {
    pub pair_id: u64,
    pub scene_seed: u64,
    pub pattern: CfaPattern,
    pub isp: IspParams,
    pub profile_index: usize,
    noise: Rng,
}

fn pair_stream(cfg: &BuildConfig, pair_id: u64) -> Rng {
    Rng::from_seed(cfg.seed).derive("pair").derive_index(pair_id)
}

pub fn plan_pair(cfg: &BuildConfig, pair_id: u64) -> Result<PairPlan> {
    let rng = pair_stream(cfg, pair_id);
    Ok(PairPlan {
        pair_id,
        scene_seed: rng.derive("scene-seed").next_u64(),
        pattern: *rng.derive("pattern").choose(&cfg.patterns),
        isp: cfg.isp.sample(&mut rng.derive("isp"))?,
        profile_index: rng.derive("profile").below(cfg.profiles.len()),
        noise: rng.derive("noise"),
    })
}

/// Scene → render → unprocess; the noise-free half of a pair.
pub fn clean_frame(cfg: &BuildConfig, scene_seed: u64, pair_id: u64, isp: &IspParams, pattern: CfaPattern) -> Result<BayerImage> {
    let spec = scene::scene_from_seed(scene_seed, pair_id, &cfg.scene)?;
    let rgb = scene::render(&spec);
    unprocess::unprocess(&rgb, isp, pattern)
}

pub struct GeneratedPair {
    pub clean: BayerImage,
    pub noisy: BayerImage,
    pub gain_scale: f64,
}

pub fn generate_pair(cfg: &BuildConfig, plan: &PairPlan) -> Result<GeneratedPair> {
    let clean = clean_frame(cfg, plan.scene_seed, plan.pair_id, &plan.isp, plan.pattern)?;
    let inj = InjectionConfig {
        profile: cfg.profiles[plan.profile_index].clone(),
        gain_range: cfg.gain_range,
        clamp: cfg.clamp,
        seed: cfg.seed,
    };
    let noisy = noise::inject(&clean, &inj, &plan.noise)?;
    Ok(GeneratedPair {
        clean,
        noisy: noisy.image,
        gain_scale: noisy.gain_scale,
    })
}

pub fn pair_paths(cfg: &BuildConfig, pair_id: u64) -> (String, String) {
    let shard = pair_id / cfg.shard_size as u64;
    (
        format!("shard_{shard:04}/pair_{pair_id:06}_clean.fsraw"),
        format!("shard_{shard:04}/pair_{pair_id:06}_noisy.fsraw"),
    )
}

fn resolve(root: &Path, rel: &str) -> PathBuf {
    rel.split('/').fold(root.to_path_buf(), |p, part| p.join(part))
}

fn file_matches(root: &Path, f: &FileRef) -> bool {
    fs::read(resolve(root, &f.path)).is_ok_and(|b| b.len() as u64 == f.bytes && checksum(&b) == f.checksum)
}

/// Decodes both frames of a pair.
pub fn load_pair(root: &Path, rec: &PairRecord) -> Result<(BayerImage, BayerImage)> {
    let (clean, _) = rawio::read_bayer(&resolve(root, &rec.clean.path))?;
    let (noisy, _) = rawio::read_bayer(&resolve(root, &rec.noisy.path))?;
    Ok((clean, noisy))
}

enum Outcome {
    Pair(Box<PairRecord>),
    Skipped(SkippedRecord),
}

fn write_frame(root: &Path, rel: String, img: &BayerImage, levels: RawLevels) -> Result<FileRef> {
    let bytes = rawio::encode_bayer(img, levels);
    rawio::write_atomic(&resolve(root, &rel), &bytes)?;
    Ok(FileRef {
        path: rel,
        checksum: checksum(&bytes),
        bytes: bytes.len() as u64,
    })
}

fn build_one(cfg: &BuildConfig, root: &Path, pair_id: u64) -> Result<Outcome> {
    let staged = plan_pair(cfg, pair_id).and_then(|plan| generate_pair(cfg, &plan).map(|g| (plan, g)));
    let (plan, pair) = match staged {
        Ok(v) => v,
        Err(e @ Error::Io { .. }) => return Err(e),
        Err(e) => {
            log::warn!("pair {pair_id} skipped: {e}");
            return Ok(Outcome::Skipped(SkippedRecord {
                pair_id,
                error: e.to_string(),
            }));
        }
    };
    let (clean_rel, noisy_rel) = pair_paths(cfg, pair_id);
    let clean = write_frame(root, clean_rel, &pair.clean, cfg.levels)?;
    let noisy = write_frame(root, noisy_rel, &pair.noisy, cfg.levels)?;
    Ok(Outcome::Pair(Box::new(PairRecord {
        pair_id,
        scene_seed: plan.scene_seed,
        pattern: plan.pattern,
        isp: plan.isp,
        profile_index: plan.profile_index,
        profile: cfg.profiles[plan.profile_index].label(),
        gain_scale: pair.gain_scale,
        clamp: cfg.clamp,
        clean,
        noisy,
    })))
}

/// Pairs from an earlier (possibly interrupted) run of the same config
/// whose files are still intact.
fn reusable_pairs(cfg_hash: &str, root: &Path) -> HashMap<u64, PairRecord> {
    let mut out = HashMap::new();
    for name in [MANIFEST_FILE, PARTIAL_MANIFEST_FILE] {
        let path = root.join(name);
        if !path.exists() {
            continue;
        }
        let Ok((header, pairs, _, _)) = read_records(&path) else {
            log::warn!("ignoring unreadable {}", path.display());
            continue;
        };
        if header.config_hash != cfg_hash {
            continue;
        }
        for p in pairs {
            if file_matches(root, &p.clean) && file_matches(root, &p.noisy) {
                out.insert(p.pair_id, p);
            }
        }
    }
    out
}

fn remove_stale_temps(root: &Path) -> Result<()> {
    let ctx = |p: &Path| format!("scanning {}", p.display());
    let mut dirs = vec![root.to_path_buf()];
    while let Some(dir) = dirs.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(ctx(&dir), e))? {
            let path = entry.map_err(|e| Error::io(ctx(&dir), e))?.path();
            if path.is_dir() && dir == root {
                dirs.push(path);
            } else if path.extension().is_some_and(|e| e == "tmp") {
                fs::remove_file(&path).map_err(|e| Error::io(format!("removing {}", path.display()), e))?;
            }
        }
    }
    Ok(())
}

struct PartialLog {
    out: Mutex<BufWriter<fs::File>>,
    path: PathBuf,
}

impl PartialLog {
    fn create(path: PathBuf, header: &ManifestHeader) -> Result<Self> {
        let f = fs::File::create(&path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let log = Self {
            out: Mutex::new(BufWriter::new(f)),
            path,
        };
        log.append(&ManifestRecord::Header(header.clone()))?;
        Ok(log)
    }

    fn append(&self, rec: &ManifestRecord) -> Result<()> {
        let line = serde_json::to_string(rec)?;
        let mut out = self.out.lock().expect("partial manifest lock");
        writeln!(out, "{line}")
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(format!("appending to {}", self.path.display()), e))
    }
}

/// Builds (or resumes) the dataset under `root` with at most `workers`
/// threads (0 picks the machine's core count).
pub fn build(cfg: &BuildConfig, root: &Path, workers: usize) -> Result<DatasetManifest> {
    cfg.validate()?;
    fs::create_dir_all(root).map_err(|e| Error::io(format!("creating {}", root.display()), e))?;
    remove_stale_temps(root)?;
    let header = ManifestHeader {
        format_version: MANIFEST_FORMAT_VERSION,
        config_hash: cfg.hash(),
        config: cfg.clone(),
    };
    let reuse = reusable_pairs(&header.config_hash, root);
    if !reuse.is_empty() {
        log::info!("resuming: {} pairs already on disk", reuse.len());
    }

    let shards = cfg.count.div_ceil(cfg.shard_size);
    for s in 0..shards {
        let dir = root.join(format!("shard_{s:04}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }

    let partial = PartialLog::create(root.join(PARTIAL_MANIFEST_FILE), &header)?;
    for rec in reuse.values() {
        partial.append(&ManifestRecord::Pair(rec.clone()))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let outcomes: Result<Vec<Outcome>> = pool.install(|| {
        (0..cfg.count as u64)
            .into_par_iter()
            .map(|id| {
                if let Some(rec) = reuse.get(&id) {
                    return Ok(Outcome::Pair(Box::new(rec.clone())));
                }
                let outcome = build_one(cfg, root, id)?;
                if let Outcome::Pair(rec) = &outcome {
                    partial.append(&ManifestRecord::Pair((**rec).clone()))?;
                }
                Ok(outcome)
            })
            .collect()
    });
    let outcomes = match outcomes {
        Ok(o) => o,
        Err(e) => {
            log::error!("build aborted; finished pairs are listed in {}", partial.path.display());
            return Err(e);
        }
    };

    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Pair(p) => pairs.push(*p),
            Outcome::Skipped(s) => skipped.push(s),
        }
    }
    let totals = Totals {
        pairs: pairs.len(),
        skipped: skipped.len(),
        bytes: pairs.iter().map(|p| p.clean.bytes + p.noisy.bytes).sum(),
    };
    let manifest = DatasetManifest {
        header,
        pairs,
        skipped,
        totals,
    };
    rawio::write_atomic(&root.join(MANIFEST_FILE), manifest.to_jsonl()?.as_bytes())?;
    let partial_path = partial.path.clone();
    drop(partial);
    fs::remove_file(&partial_path).map_err(|e| Error::io(format!("removing {}", partial_path.display()), e))?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    DuplicatePairId,
    Missing { file: String },
    Unreadable { file: String, reason: String },
    Checksum { file: String, expected: String, actual: String },
    GeometryMismatch,
    PatternMismatch { expected: CfaPattern, clean: Option<CfaPattern>, noisy: Option<CfaPattern> },
    IdenticalUnderNonzeroProfile,
    UnknownProfile { index: usize },
    Regeneration { file: String, reason: String },
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Problem::DuplicatePairId => write!(f, "duplicate pair id"),
            Problem::Missing { file } => write!(f, "{file}: missing"),
            Problem::Unreadable { file, reason } => write!(f, "{file}: unreadable ({reason})"),
            Problem::Checksum { file, expected, actual } => {
                write!(f, "{file}: checksum {actual}, manifest says {expected}")
            }
            Problem::GeometryMismatch => write!(f, "clean and noisy geometry differ"),
            Problem::PatternMismatch { expected, clean, noisy } => {
                write!(f, "pattern mismatch: manifest {expected}, clean {clean:?}, noisy {noisy:?}")
            }
            Problem::IdenticalUnderNonzeroProfile => write!(f, "pair identical under nonzero profile"),
            Problem::UnknownProfile { index } => write!(f, "profile index {index} not in header"),
            Problem::Regeneration { file, reason } => write!(f, "{file}: regeneration check failed ({reason})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairFailure {
    pub pair_id: u64,
    pub problem: Problem,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub pairs_checked: usize,
    pub spot_checked: usize,
    pub manifest_problems: Vec<String>,
    pub failures: Vec<PairFailure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.manifest_problems.is_empty() && self.failures.is_empty()
    }

    pub fn failed_pairs(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.failures.iter().map(|f| f.pair_id).collect();
        ids.dedup();
        ids
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.manifest_problems {
            writeln!(f, "manifest: {p}")?;
        }
        for fail in &self.failures {
            writeln!(f, "pair {:06}: {}", fail.pair_id, fail.problem)?;
        }
        write!(
            f,
            "{} pairs checked, {} regenerated, {} failures: {}",
            self.pairs_checked,
            self.spot_checked,
            self.failures.len() + self.manifest_problems.len(),
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

fn check_file(root: &Path, f: &FileRef) -> std::result::Result<Vec<u8>, Problem> {
    let path = resolve(root, &f.path);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Problem::Missing { file: f.path.clone() }),
        Err(e) => {
            return Err(Problem::Unreadable {
                file: f.path.clone(),
                reason: e.to_string(),
            })
        }
    };
    let actual = checksum(&bytes);
    if actual != f.checksum {
        return Err(Problem::Checksum {
            file: f.path.clone(),
            expected: f.checksum.clone(),
            actual,
        });
    }
    Ok(bytes)
}

fn verify_pair(cfg: &BuildConfig, root: &Path, rec: &PairRecord, levels: RawLevels) -> Vec<Problem> {
    let mut problems = Vec::new();
    let clean = check_file(root, &rec.clean).map_err(|p| problems.push(p)).ok();
    let noisy = check_file(root, &rec.noisy).map_err(|p| problems.push(p)).ok();
    let (Some(clean), Some(noisy)) = (clean, noisy) else {
        return problems;
    };
    let decoded = |bytes: &[u8], file: &str| {
        rawio::decode_bayer(bytes).map_err(|reason| Problem::Unreadable {
            file: file.to_string(),
            reason,
        })
    };
    let (c, n) = match (decoded(&clean, &rec.clean.path), decoded(&noisy, &rec.noisy.path)) {
        (Ok(c), Ok(n)) => (c, n),
        (c, n) => {
            problems.extend(c.err());
            problems.extend(n.err());
            return problems;
        }
    };
    if c.0.width() != n.0.width() || c.0.height() != n.0.height() {
        problems.push(Problem::GeometryMismatch);
    }
    if c.1.pattern != Some(rec.pattern) || n.1.pattern != Some(rec.pattern) {
        problems.push(Problem::PatternMismatch {
            expected: rec.pattern,
            clean: c.1.pattern,
            noisy: n.1.pattern,
        });
    }
    match cfg.profiles.get(rec.profile_index) {
        None => problems.push(Problem::UnknownProfile { index: rec.profile_index }),
        Some(p) if !p.is_zero() && clean[rawio::HEADER_LEN..] == noisy[rawio::HEADER_LEN..] => {
            problems.push(Problem::IdenticalUnderNonzeroProfile)
        }
        Some(_) => {}
    }

    if rec.pair_id % SPOT_CHECK_STRIDE == 0 && problems.is_empty() {
        match plan_pair(cfg, rec.pair_id).and_then(|plan| generate_pair(cfg, &plan).map(|g| (plan, g))) {
            Err(e) => problems.push(Problem::Regeneration {
                file: rec.clean.path.clone(),
                reason: e.to_string(),
            }),
            Ok((plan, g)) => {
                if plan.scene_seed != rec.scene_seed || plan.isp != rec.isp || plan.pattern != rec.pattern {
                    problems.push(Problem::Regeneration {
                        file: rec.clean.path.clone(),
                        reason: "recorded seed or parameters differ from the config's draws".into(),
                    });
                }
                if rawio::encode_bayer(&g.clean, levels) != clean {
                    problems.push(Problem::Regeneration {
                        file: rec.clean.path.clone(),
                        reason: "clean frame differs from re-render".into(),
                    });
                }
                if rawio::encode_bayer(&g.noisy, levels) != noisy {
                    problems.push(Problem::Regeneration {
                        file: rec.noisy.path.clone(),
                        reason: "noisy frame differs from re-injection".into(),
                    });
                }
            }
        }
    }
    problems
}

/// Re-checks every file listed in the manifest at `manifest_path`.
pub fn verify(manifest_path: &Path) -> Result<VerifyReport> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let cfg = &manifest.header.config;
    let mut report = VerifyReport::default();

    if cfg.hash() != manifest.header.config_hash {
        report.manifest_problems.push(format!(
            "config hash {} does not match recorded {}",
            cfg.hash(),
            manifest.header.config_hash
        ));
    }
    let bytes: u64 = manifest.pairs.iter().map(|p| p.clean.bytes + p.noisy.bytes).sum();
    let expected = Totals {
        pairs: manifest.pairs.len(),
        skipped: manifest.skipped.len(),
        bytes,
    };
    if expected != manifest.totals {
        report
            .manifest_problems
            .push(format!("totals {:?} do not match records {:?}", manifest.totals, expected));
    }

    let mut seen = HashSet::new();
    for p in &manifest.pairs {
        if !seen.insert(p.pair_id) {
            report.failures.push(PairFailure {
                pair_id: p.pair_id,
                problem: Problem::DuplicatePairId,
            });
        }
    }

    let per_pair: Vec<(u64, bool, Vec<Problem>)> = manifest
        .pairs
        .par_iter()
        .map(|rec| {
            let spot = rec.pair_id % SPOT_CHECK_STRIDE == 0;
            (rec.pair_id, spot, verify_pair(cfg, root, rec, cfg.levels))
        })
        .collect();
    for (pair_id, spot, problems) in per_pair {
        report.pairs_checked += 1;
        report.spot_checked += usize::from(spot);
        report
            .failures
            .extend(problems.into_iter().map(|problem| PairFailure { pair_id, problem }));
    }
    report.failures.sort_by_key(|f| f.pair_id);
    Ok(report)
}
