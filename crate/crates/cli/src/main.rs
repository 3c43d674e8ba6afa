mod config;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde_json::json;

use sots::attacks::{
    class1_attack, class1_probe, class2_attack, class2_probe, count_candidates, encrypt_exact, two_stage_cpa_trial,
    ExtractedMatrix, RowCount,
};
use sots::bounds::{CpaParams, IndistParams, SecurityReport};
use sots::codec::{decrypt, encrypt, sigma_for_pnr, Ciphertext, RecoverySettings};
use sots::experiments::{
    bound_sweep, emit_bound_tables, phase_csv, phase_frontier, run_image_pipeline, run_indistinguishability,
    synthetic_image, BoundTables, ImageConfig, ImageResult, IndistConfig, IndistRow, PhaseConfig, SweepVar,
};
use sots::pgm::GrayImage;
use sots::sensing::build_sensing_key;
use sots::transforms::estimate_c_max;
use sots::{Basis, BasisKind, Error, Key, KeyFile, KeystreamSource, LfsrSpec, Result, SystemParams};

use config::{parse_list, Config};

#[derive(Parser)]
#[command(name = "sots", version, about = "Sparse one-time sensing cryptosystem toolkit")]
struct Cli {
    /// Parameter file of key=value lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a fresh LFSR key.
    Keygen {
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Encrypt a PGM image or a whitespace-separated vector.
    Encrypt(EncryptArgs),
    /// Decrypt a ciphertext file.
    Decrypt(DecryptArgs),
    /// Estimate c_max for a basis.
    Cmax(CmaxArgs),
    /// Closed-form security bounds.
    Bounds(BoundsArgs),
    /// Run chosen-plaintext attacks, one JSON record per trial.
    Attack(AttackArgs),
    /// Phase-transition grid or frontier.
    Phase(PhaseArgs),
    /// Image encryption and decryption with PSNR.
    Image(ImageArgs),
    /// Indistinguishability game against the energy detector.
    Indist(IndistArgs),
}

#[derive(Args)]
struct EncryptArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Target peak-to-noise ratio; overrides --sigma.
    #[arg(long)]
    pnr: Option<f64>,
    /// Keystream symbols already used by earlier encryptions.
    #[arg(long)]
    stream_offset: Option<u64>,
}

#[derive(Args)]
struct DecryptArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    basis: Option<BasisKind>,
    /// Treat the plaintext as a square image of this side.
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    stream_offset: Option<u64>,
}

#[derive(Args)]
struct CmaxArgs {
    #[arg(long)]
    basis: Option<BasisKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(subcommand)]
    action: Option<BoundsAction>,
    #[arg(long, global = true)]
    k: Option<u32>,
    #[arg(long = "L", global = true)]
    l: Option<f64>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    #[arg(long, global = true)]
    eps2: Option<f64>,
    #[arg(long, global = true)]
    eps3: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    q: Option<usize>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    pnr: Option<f64>,
    #[arg(long, global = true)]
    cmax: Option<f64>,
    #[arg(long = "M", global = true)]
    m: Option<usize>,
}

#[derive(Subcommand)]
enum BoundsAction {
    /// One report row per value of the swept variable.
    Sweep {
        #[arg(long)]
        var: SweepVar,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        step: f64,
    },
    /// Write the bound tables into the --out directory.
    Tables,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    mode: String,
    /// Parameter file with n, m, q, k and L.
    #[arg(long)]
    params_file: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct PhaseArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Use the dense q = N baseline.
    #[arg(long)]
    dense: bool,
    #[arg(long)]
    basis: Option<BasisKind>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Comma-separated M/N numerators over a denominator of 32.
    #[arg(long)]
    rho_steps: Option<String>,
    #[arg(long)]
    kappa_points: Option<usize>,
    /// Report only the success frontier per M/N.
    #[arg(long)]
    frontier: bool,
}

#[derive(Args)]
struct ImageArgs {
    /// Input PGM; the bundled synthetic image is used when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Side of the synthetic image.
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    dense: bool,
    #[arg(long)]
    basis: Option<BasisKind>,
    #[arg(long)]
    sparsity: Option<usize>,
}

#[derive(Args)]
struct IndistArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    basis: Option<BasisKind>,
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    gammas: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    swap: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    let seed = cfg.pick(cli.seed, "seed", 1)?;
    let out = cli.out.clone().or(cfg.lookup("out")?);
    match cli.command {
        Command::Keygen { degree } => keygen(&cfg, cli.seed, degree, out.as_deref()),
        Command::Encrypt(a) => encrypt_cmd(&cfg, cli.seed, a, out.as_deref()),
        Command::Decrypt(a) => decrypt_cmd(&cfg, a, out.as_deref()),
        Command::Cmax(a) => {
            let basis = cfg.pick(a.basis, "basis", BasisKind::Dct)?;
            let n = cfg.pick(a.n, "n", 1024)?;
            let k = cfg.pick(a.k, "k", 8)?;
            let trials = cfg.pick(a.trials, "trials", 10_000)?;
            let c = estimate_c_max(&Basis::new_1d(basis, n)?, k, trials, seed)?;
            emit(out.as_deref(), &format!("basis,N,K,c_max\n{basis},{n},{k},{c}\n"))
        }
        Command::Bounds(a) => bounds_cmd(&cfg, a, out.as_deref()),
        Command::Attack(a) => attack_cmd(&cfg, seed, a, out.as_deref()),
        Command::Phase(a) => phase_cmd(&cfg, seed, a, out.as_deref()),
        Command::Image(a) => image_cmd(&cfg, seed, a, out.as_deref()),
        Command::Indist(a) => {
            let n = cfg.pick(a.n, "n", 1024)?;
            let icfg = IndistConfig {
                n,
                m: cfg.pick(a.m, "m", n / 4)?,
                q: cfg.pick(a.q, "q", 64)?,
                basis: cfg.pick(a.basis, "basis", BasisKind::Dct)?,
                sparsity: cfg.pick(a.sparsity, "sparsity", 8)?,
                gammas: parse_list(&cfg.pick(a.gammas, "gammas", "0.25,0.5,0.9,1.0".to_string())?)?,
                trials: cfg.pick(a.trials, "trials", 2000)?,
                seed,
                swap: a.swap || cfg.pick(None, "swap", false)?,
            };
            let rows = run_indistinguishability(&icfg)?;
            let mut csv = format!("{}\n", IndistRow::CSV_HEADER);
            for r in &rows {
                csv.push_str(&r.csv());
                csv.push('\n');
                if !r.dominated() {
                    eprintln!("warning: empirical p_d exceeds the bound at gamma={}", r.gamma);
                }
            }
            emit(out.as_deref(), &csv)
        }
    }
}

/// Write to `path`, or stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn keygen(cfg: &Config, seed: Option<u64>, degree: Option<usize>, out: Option<&Path>) -> Result<()> {
    let degree = cfg.pick(degree, "degree", 64)?;
    let spec = LfsrSpec::builtin(degree)?;
    let key = match seed {
        Some(s) => Key::random(degree, &mut StdRng::seed_from_u64(s))?,
        None => Key::random(degree, &mut rand::rng())?,
    };
    emit(out, &KeyFile { spec, key }.to_string())
}

fn source_at(key_path: &Path, offset: u64) -> Result<KeystreamSource> {
    let mut source = KeyFile::parse(&std::fs::read_to_string(key_path)?)?.source()?;
    for _ in 0..offset {
        source.ssg_next_bipolar();
    }
    Ok(source)
}

fn read_plaintext(path: &Path) -> Result<(Vec<f64>, Option<GrayImage>)> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"P5") {
        let img = GrayImage::parse(&bytes)?;
        return Ok((img.to_column_stacked(), Some(img)));
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Format("plaintext is neither PGM nor text".into()))?;
    let x = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("{t:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((x, None))
}

fn params_for(n: usize, m: usize, q: usize, k: usize, sigma: f64) -> Result<SystemParams> {
    if q == n {
        SystemParams::dense(n, m, k, sigma)
    } else {
        SystemParams::new(n, m, q, k, sigma)
    }
}

fn encrypt_cmd(cfg: &Config, seed: Option<u64>, a: EncryptArgs, out: Option<&Path>) -> Result<()> {
    let offset = cfg.pick(a.stream_offset, "stream_offset", 0)?;
    let mut source = source_at(&a.key, offset)?;
    let (x, _) = read_plaintext(&a.input)?;
    let n = x.len();
    let m = cfg.pick(a.m, "m", n / 2)?;
    let q = cfg.require(a.q, "q")?;
    let sigma = match cfg.pick_opt(a.pnr, "pnr")? {
        Some(target) => sigma_for_pnr(&x, m, target)?,
        None => cfg.pick(a.sigma, "sigma", 0.0)?,
    };
    let params = params_for(n, m, q, source.spec().degree(), sigma)?;
    let enc = encrypt(&mut source, &params, &x, seed)?;
    if enc.period_warning {
        eprintln!("warning: keystream use has reached 2^floor(k/2) symbols; refresh the key");
    }
    let out = out.ok_or_else(|| Error::Argument("encrypt needs --out".into()))?;
    std::fs::write(out, enc.ciphertext.to_bytes())?;
    eprintln!("next stream offset: {}", offset + source.emitted());
    Ok(())
}

fn decrypt_cmd(cfg: &Config, a: DecryptArgs, out: Option<&Path>) -> Result<()> {
    let offset = cfg.pick(a.stream_offset, "stream_offset", 0)?;
    let mut source = source_at(&a.key, offset)?;
    let ct = Ciphertext::from_bytes(&std::fs::read(&a.input)?)?;
    let params = params_for(ct.n, ct.m, ct.q, source.spec().degree(), ct.sigma)?;
    let (key, _) = build_sensing_key(&mut source, &params)?;
    let kind = cfg.pick(a.basis, "basis", BasisKind::Dct)?;
    let side = cfg.pick_opt(a.side, "side")?;
    let basis = match side {
        Some(s) => Basis::new_2d(kind, s)?,
        None => Basis::new_1d(kind, ct.n)?,
    };
    let mut settings = RecoverySettings::with_defaults(&params, basis);
    settings.sparsity = cfg.pick(a.sparsity, "sparsity", settings.sparsity)?;
    settings.tolerance = cfg.pick(a.tolerance, "tolerance", settings.tolerance)?;
    let x = decrypt(&key, &params, &ct, &settings)?;
    match side {
        Some(s) => {
            let img = GrayImage::from_column_stacked(&x, s, s, 255)?;
            let out = out.ok_or_else(|| Error::Argument("image decryption needs --out".into()))?;
            img.write(out)
        }
        None => {
            let text: String = x.iter().map(|v| format!("{v}\n")).collect();
            emit(out, &text)
        }
    }
}

fn bounds_cmd(cfg: &Config, a: BoundsArgs, out: Option<&Path>) -> Result<()> {
    if let Some(BoundsAction::Tables) = a.action {
        let dir = out.ok_or_else(|| Error::Argument("bounds tables needs --out <dir>".into()))?;
        for p in emit_bound_tables(&BoundTables::default(), dir)? {
            println!("{}", p.display());
        }
        return Ok(());
    }
    let q = cfg.pick(a.q, "q", 256)?;
    let cpa = CpaParams {
        k: cfg.pick(a.k, "k", 256)?,
        q,
        rho: cfg.pick(a.rho, "rho", 0.5)?,
        l: cfg.pick(a.l, "L", 128.0)?,
        eps2: cfg.pick(a.eps2, "eps2", 1e-5)?,
        delta: cfg.pick(a.delta, "delta", 0.5)?,
        eps3: cfg.pick(a.eps3, "eps3", 1e-5)?,
    };
    let indist = IndistParams {
        m: cfg.pick(a.m, "M", 256)?,
        q,
        gamma: cfg.pick(a.gamma, "gamma", 0.5)?,
        pnr_max: cfg.pick(a.pnr, "pnr", f64::INFINITY)?,
        c_max: cfg.pick(a.cmax, "cmax", 4.0)?,
    };
    match a.action {
        Some(BoundsAction::Sweep { var, from, to, step }) => emit(out, &bound_sweep(indist, cpa, var, from, to, step)?),
        _ => {
            let report = SecurityReport::evaluate(indist, cpa);
            let text = format!("{}\n{}\n", SecurityReport::CSV_HEADER, report.csv_row());
            emit(out, &text)?;
            // Surface the first invalid bound through the exit status.
            report.p_d.and(report.q_cpa).and(report.t_ref_up).map(|_| ())
        }
    }
}

fn attack_cmd(cfg: &Config, seed: u64, a: AttackArgs, out: Option<&Path>) -> Result<()> {
    let file = Config::load(a.params_file.as_deref())?.fallback(cfg);
    let n = file.pick(None, "n", 16)?;
    let m = file.pick(None, "m", 8)?;
    let q = file.pick(None, "q", 2)?;
    let k = file.pick(None, "k", 12)?;
    let l = file.pick(None, "L", 4.0)?;
    let trials = file.pick(a.trials, "trials", 1)?;
    let params = SystemParams::new(n, m, q, k, 0.0)?;
    let mut lines = String::new();
    for t in 0..trials {
        let mut rng = StdRng::seed_from_u64(sots::seed::derive_seed(seed, t as u64, 0));
        let record = match a.mode.as_str() {
            "trial" => {
                let mut v = serde_json::to_value(two_stage_cpa_trial(&params, l, &mut rng)?)
                    .map_err(|e| Error::Format(e.to_string()))?;
                v["mode"] = json!("trial");
                v
            }
            "class1" | "class2" => {
                let mut source = KeystreamSource::new(LfsrSpec::builtin(k)?, &Key::random(k, &mut rng)?)?;
                let (s_log2, correct) = if a.mode == "class1" {
                    let enc = encrypt(&mut source, &params, &class1_probe(&params), None)?;
                    let counts = class1_attack(&enc.ciphertext.values, &params)?;
                    let truth: Vec<RowCount> =
                        (0..counts.len()).map(|i| RowCount::from_signs(i, enc.key.row_signs(i))).collect();
                    (count_candidates(&counts).log2(), counts == truth)
                } else {
                    let (y, key) = encrypt_exact(&mut source, &params, &class2_probe(n))?;
                    (0.0, class2_attack(&y, &params)? == ExtractedMatrix::from_key(&key, &params))
                };
                json!({
                    "mode": a.mode,
                    "S_CPA_log2": s_log2,
                    "feasible": s_log2 <= l,
                    "stage1_success": correct,
                    "stage2_success": null,
                    "work": {"candidates": 0, "states_tested": 0},
                })
            }
            other => return Err(Error::Argument(format!("unknown attack mode {other:?}"))),
        };
        lines.push_str(&record.to_string());
        lines.push('\n');
    }
    emit(out, &lines)
}

fn phase_cmd(cfg: &Config, seed: u64, a: PhaseArgs, out: Option<&Path>) -> Result<()> {
    let dense = a.dense || cfg.pick(None, "dense", false)?;
    let q = if dense { None } else { Some(cfg.pick(a.q, "q", 32)?) };
    let mut pc = PhaseConfig::desk(q, cfg.pick(a.trials, "trials", 200)?, seed);
    pc.n = cfg.pick(a.n, "n", pc.n)?;
    pc.basis = cfg.pick(a.basis, "basis", pc.basis)?;
    pc.threshold = cfg.pick(a.threshold, "threshold", pc.threshold)?;
    pc.kappa_points = cfg.pick(a.kappa_points, "kappa_points", pc.kappa_points)?;
    if let Some(steps) = cfg.pick_opt(a.rho_steps, "rho_steps")? {
        pc.rho_steps = parse_list(&steps)?;
    }
    if a.frontier || cfg.pick(None, "frontier", false)? {
        let mut csv = String::from("rho,kappa_frontier\n");
        for (step, ki) in phase_frontier(&pc)? {
            csv.push_str(&format!(
                "{},{:.2}\n",
                step as f64 / pc.rho_denominator as f64,
                ki as f64 * pc.kappa_step
            ));
        }
        return emit(out, &csv);
    }
    emit(out, &phase_csv(&sots::experiments::run_phase_transition(&pc)?))
}

fn image_cmd(cfg: &Config, seed: u64, a: ImageArgs, out: Option<&Path>) -> Result<()> {
    let (image, name) = match cfg.pick_opt(a.input, "input")? {
        Some(p) => {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (GrayImage::read(&p)?, name)
        }
        None => (synthetic_image(cfg.pick(a.side, "side", 64)?), "synthetic".to_string()),
    };
    let n = image.width * image.height;
    let rho = cfg.pick(a.rho, "rho", 0.5)?;
    let num = rho * n as f64;
    if (num - num.round()).abs() > 1e-9 {
        return Err(Error::Argument(format!("rho N = {num} is not an integer")));
    }
    let dense = a.dense || cfg.pick(None, "dense", false)?;
    let basis = cfg.pick(a.basis, "basis", BasisKind::D4)?;
    let icfg = ImageConfig {
        rho_num: num.round() as usize,
        rho_den: n,
        q: if dense { None } else { Some(cfg.pick(a.q, "q", 32)?) },
        basis,
        sparsity: cfg.pick_opt(a.sparsity, "sparsity")?,
        seed,
    };
    let r = run_image_pipeline(&icfg, &image)?;
    let line = format!("{}\n{}\n", ImageResult::CSV_HEADER, r.csv(&name, basis));
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{name}.sots")), r.ciphertext.to_bytes())?;
        r.decrypted.write(&dir.join(format!("{name}_decrypted.pgm")))?;
        r.visualization.write(&dir.join(format!("{name}_encrypted.pgm")))?;
        std::fs::write(dir.join(format!("{name}_psnr.csv")), &line)?;
    }
    emit(None, &line)
}
