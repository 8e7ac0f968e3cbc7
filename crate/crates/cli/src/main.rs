use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use fpshield::farble::{
    degrade_geolocation, farble_audio, farble_bitmap, resolve_protection, spoof_device_ids,
    spoof_gl_strings, BitmapBuffer, ProfileCatalog, ProfileId, ProtectionAction,
    PROFILE_SCHEMA_VERSION,
};
use fpshield::fpd::{
    self, block_directives, evaluate, load_fpd_config, render_report, FpdConfig, FpdMode, Trace,
};
use fpshield::keyrand::{new_session_key, Origin, SessionKey};
use fpshield::nbs::{self, AddressClass, LearnCache, NbsMode, Proxy, ProxyConfig};
use fpshield::sensorsim::{SensorKind, SensorValue};
use fpshield::timeshield::shield_timestamp;
use fpshield::{tags, AudioSamples, ContextEpoch, GeoCoordinate, OriginContext, ShieldConfig};

#[derive(Debug, Parser)]
#[command(
    name = "fpshield",
    about = "Fingerprinting countermeasures: farbling, detection, network boundary checks"
)]
struct Cli {
    /// Session key as 64 hex characters. A fresh random key is used when omitted.
    #[arg(long, global = true, value_name = "HEX64")]
    session: Option<SessionKey>,
    /// Origin the output is produced for, e.g. https://a.example
    #[arg(long, global = true, value_parser = parse_origin)]
    origin: Option<Origin>,
    /// Protection profile.
    #[arg(long, global = true, default_value = "p1")]
    profile: ProfileId,
    #[command(subcommand)]
    command: Command,
}

fn parse_origin(s: &str) -> Result<Origin, String> {
    Origin::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Perturb canvas, audio or geolocation data.
    #[command(subcommand)]
    Farble(FarbleCmd),
    /// Generate spoofed identifiers.
    #[command(subcommand)]
    Spoof(SpoofCmd),
    /// Synthetic sensor readings.
    #[command(subcommand)]
    Sensors(SensorsCmd),
    /// Timestamp shielding.
    #[command(subcommand)]
    Time(TimeCmd),
    /// Fingerprinting detection.
    #[command(subcommand)]
    Fpd(FpdCmd),
    /// Network boundary checks.
    #[command(subcommand)]
    Nbs(NbsCmd),
}

#[derive(Debug, Subcommand)]
enum FarbleCmd {
    /// Bitmap file: LE32 width, LE32 height, RGBA bytes.
    Canvas(InOut),
    /// Audio file: LE32 rate, LE32 channels, LE32 frames, interleaved f32 LE samples.
    Audio(InOut),
    /// Coarsen a coordinate to a keyed grid; prints JSON.
    Geo {
        #[arg(long, allow_hyphen_values = true)]
        lat: f64,
        #[arg(long, allow_hyphen_values = true)]
        lon: f64,
        #[arg(long, default_value_t = 0.0)]
        accuracy: f64,
        /// Grid cell size in meters.
        #[arg(long)]
        precision: f64,
    },
}

#[derive(Debug, Args)]
struct InOut {
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long = "out", value_name = "FILE")]
    output: PathBuf,
}

#[derive(Debug, Subcommand)]
enum SpoofCmd {
    /// WebGL vendor and renderer strings as JSON.
    Gl,
    /// Media device ids as a JSON array.
    Devices {
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SampleFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Subcommand)]
enum SensorsCmd {
    /// Sample one sensor at a fixed rate starting at context time 0.
    Gen {
        #[arg(long)]
        sensor: SensorKind,
        /// Samples per second.
        #[arg(long, default_value_t = 10.0)]
        rate: f64,
        /// Seconds of data.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, value_enum, default_value_t = SampleFormat::Csv)]
        format: SampleFormat,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum TimeCmd {
    /// Read one timestamp (ms) per line on standard input, print the shielded value.
    Shield {
        #[arg(long, default_value_t = 10.0)]
        quantum: f64,
        #[arg(long)]
        no_randomize: bool,
    },
}

#[derive(Debug, Subcommand)]
enum FpdCmd {
    /// Evaluate a call trace; prints the text report.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        /// Group tree; the shipped default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "passive")]
        mode: FpdMode,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum NbsCmd {
    /// Decide a single request.
    Check {
        #[arg(long, default_value = "public")]
        origin_class: AddressClass,
        /// host or host:port
        #[arg(long)]
        target: String,
        /// In preresolve mode, the resolved address. In learn mode, an address
        /// previously seen on a reply from the target.
        #[arg(long)]
        resolved: Option<IpAddr>,
        #[arg(long)]
        mode: NbsMode,
    },
    /// Run a forward HTTP proxy applying the checks.
    Proxy {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long)]
        mode: NbsMode,
        #[arg(long, default_value = "public")]
        origin_class: AddressClass,
        /// JSON-lines decision log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

/// Bad or missing arguments detected after parsing; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn version_line() -> String {
    format!(
        "{} (engine {}, profile schema {}, fpd config schema {})",
        env!("CARGO_PKG_VERSION"),
        fpshield::ENGINE_VERSION,
        PROFILE_SCHEMA_VERSION,
        fpd::FPD_SCHEMA_VERSION
    )
}

fn main() -> ExitCode {
    let matches = Cli::command().version(version_line()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

struct Env {
    session: Option<SessionKey>,
    origin: Option<Origin>,
    profile: ProfileId,
}

impl Env {
    fn context(&self) -> Result<OriginContext> {
        let origin = self
            .origin
            .clone()
            .ok_or_else(|| UsageError("--origin is required for this command".into()))?;
        let session = match &self.session {
            Some(k) => k.clone(),
            None => {
                let k = new_session_key()?;
                eprintln!("session: {}", k.to_hex());
                k
            }
        };
        Ok(OriginContext::new(session, origin))
    }

    fn action(&self, endpoint: &str) -> ProtectionAction {
        resolve_protection(&ProfileCatalog::shipped().profile(self.profile), endpoint)
    }

    /// Prints the marker for actions that replace the computation; returns
    /// true when the caller should stop.
    fn replaced(&self, endpoint: &str) -> bool {
        let action = self.action(endpoint);
        if matches!(
            action,
            ProtectionAction::Block | ProtectionAction::FixedFake
        ) {
            let marker = serde_json::json!({
                "profile": self.profile,
                "endpoint": endpoint,
                "action": action,
            });
            println!("{marker}");
            return true;
        }
        false
    }
}

fn run(cli: Cli) -> Result<()> {
    let env = Env {
        session: cli.session,
        origin: cli.origin,
        profile: cli.profile,
    };
    match cli.command {
        Command::Farble(c) => farble(&env, c),
        Command::Spoof(c) => spoof(&env, c),
        Command::Sensors(c) => sensors(&env, c),
        Command::Time(c) => time(&env, c),
        Command::Fpd(c) => fpd_cmd(c),
        Command::Nbs(c) => nbs_cmd(c),
    }
}

fn read(path: &PathBuf) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn farble(env: &Env, cmd: FarbleCmd) -> Result<()> {
    match cmd {
        FarbleCmd::Canvas(io) => {
            const EP: &str = "HTMLCanvasElement.prototype.toDataURL";
            let ctx = env.context()?;
            let input = BitmapBuffer::from_bytes(&read(&io.input)?)?;
            if env.replaced(EP) {
                return Ok(());
            }
            let out = match env.action(EP) {
                ProtectionAction::PassThrough => input,
                _ => farble_bitmap(&ctx.seed(tags::CANVAS)?, &input),
            };
            write(&io.output, &out.to_bytes())
        }
        FarbleCmd::Audio(io) => {
            const EP: &str = "AudioBuffer.prototype.getChannelData";
            let ctx = env.context()?;
            let input = AudioSamples::from_bytes(&read(&io.input)?)?;
            if env.replaced(EP) {
                return Ok(());
            }
            let out = match env.action(EP) {
                ProtectionAction::PassThrough => input,
                _ => farble_audio(&ctx.seed(tags::AUDIO)?, &input),
            };
            write(&io.output, &out.to_bytes())
        }
        FarbleCmd::Geo {
            lat,
            lon,
            accuracy,
            precision,
        } => {
            const EP: &str = "Geolocation.prototype.getCurrentPosition";
            let ctx = env.context()?;
            let input = GeoCoordinate::new(lat, lon, accuracy)?;
            if env.replaced(EP) {
                return Ok(());
            }
            let out = match env.action(EP) {
                ProtectionAction::PassThrough => input,
                _ => degrade_geolocation(&ctx.seed(tags::GEO)?, &input, precision)?,
            };
            println!("{}", serde_json::to_string(&out)?);
            Ok(())
        }
    }
}

fn spoof(env: &Env, cmd: SpoofCmd) -> Result<()> {
    let ctx = env.context()?;
    match cmd {
        SpoofCmd::Gl => {
            if env.replaced("WebGLRenderingContext.prototype.getParameter") {
                return Ok(());
            }
            let set = spoof_gl_strings(&ctx.seed(tags::WEBGL)?);
            println!("{}", serde_json::to_string_pretty(&set)?);
        }
        SpoofCmd::Devices { count } => {
            if env.replaced("MediaDevices.prototype.enumerateDevices") {
                return Ok(());
            }
            let ids = spoof_device_ids(&ctx.seed(tags::DEVICE_IDS)?, count);
            println!("{}", serde_json::to_string_pretty(&ids)?);
        }
    }
    Ok(())
}

fn sensor_endpoint(kind: SensorKind) -> &'static str {
    match kind {
        SensorKind::Magnetometer => "Magnetometer",
        SensorKind::Accelerometer => "Accelerometer",
        SensorKind::LinearAcceleration => "LinearAccelerationSensor",
        SensorKind::Gravity => "GravitySensor",
        SensorKind::Gyroscope => "Gyroscope",
        SensorKind::OrientationAbs => "AbsoluteOrientationSensor",
        SensorKind::OrientationRel => "RelativeOrientationSensor",
        SensorKind::AmbientLight => "AmbientLightSensor",
    }
}

fn sensors(env: &Env, cmd: SensorsCmd) -> Result<()> {
    let SensorsCmd::Gen {
        sensor,
        rate,
        duration,
        format,
        out,
    } = cmd;
    if !(rate.is_finite() && rate > 0.0) || !(duration.is_finite() && duration >= 0.0) {
        return Err(UsageError("--rate must be > 0 and --duration >= 0".into()).into());
    }
    let ctx = env.context()?;
    let endpoint = sensor_endpoint(sensor);
    if env.replaced(endpoint) {
        return Ok(());
    }
    if env.action(endpoint) == ProtectionAction::PassThrough {
        // Nothing to pass through: there is no real sensor behind this tool.
        println!(
            "{}",
            serde_json::json!({"profile": env.profile, "endpoint": endpoint, "action": "PassThrough"})
        );
        return Ok(());
    }
    let state = ctx.device_state(ShieldConfig::default(), ContextEpoch::default())?;
    let sink: Box<dyn Write> = match &out {
        Some(p) => {
            Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    let n = (rate * duration).round() as u64;
    if let SampleFormat::Csv = format {
        let header = match sensor {
            SensorKind::AmbientLight => "t_ms,lux",
            SensorKind::OrientationAbs | SensorKind::OrientationRel => "t_ms,w,x,y,z",
            _ => "t_ms,x,y,z",
        };
        writeln!(w, "{header}")?;
    }
    for i in 0..n {
        let r = state.sample(sensor, i as f64 * 1000.0 / rate)?;
        match format {
            SampleFormat::Jsonl => writeln!(w, "{}", serde_json::to_string(&r)?)?,
            SampleFormat::Csv => match r.value {
                SensorValue::Vector([x, y, z]) => writeln!(w, "{},{x},{y},{z}", r.timestamp_ms)?,
                SensorValue::Scalar(v) => writeln!(w, "{},{v}", r.timestamp_ms)?,
                SensorValue::Quaternion(q) => {
                    writeln!(w, "{},{},{},{},{}", r.timestamp_ms, q.w, q.x, q.y, q.z)?
                }
            },
        }
    }
    w.flush()?;
    Ok(())
}

fn time(env: &Env, cmd: TimeCmd) -> Result<()> {
    let TimeCmd::Shield {
        quantum,
        no_randomize,
    } = cmd;
    const EP: &str = "Performance.prototype.now";
    let ctx = env.context()?;
    let cfg = ShieldConfig::new(quantum, !no_randomize).map_err(|e| UsageError(e.to_string()))?;
    if env.replaced(EP) {
        return Ok(());
    }
    let seed = ctx.seed(tags::TIME)?;
    let mut out = BufWriter::new(io::stdout().lock());
    for (n, line) in io::stdin().lock().lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let t: f64 = text
            .parse()
            .with_context(|| format!("line {}: not a number: {text:?}", n + 1))?;
        let v = shield_timestamp(&seed, t, &cfg).with_context(|| format!("line {}", n + 1))?;
        writeln!(out, "{v}")?;
    }
    out.flush()?;
    Ok(())
}

fn fpd_cmd(cmd: FpdCmd) -> Result<()> {
    let FpdCmd::Analyze {
        trace,
        config,
        mode,
        report,
    } = cmd;
    let cfg = match &config {
        Some(p) => load_fpd_config(&String::from_utf8(read(p)?)?)
            .with_context(|| format!("config {}", p.display()))?,
        None => FpdConfig::shipped(),
    };
    let trace_doc = String::from_utf8(read(&trace)?)?;
    let state = Trace::from_json(&trace_doc)
        .with_context(|| format!("trace {}", trace.display()))?
        .to_state();
    let verdict = evaluate(&state, &cfg);
    let rendered =
        render_report(&state, &cfg, &verdict).with_directives(block_directives(&verdict, mode));
    if let Some(p) = &report {
        write(p, rendered.to_json().as_bytes())?;
    }
    print!("{}", rendered.to_text());
    if mode == FpdMode::Notify && verdict.detected {
        eprintln!(
            "notice: fingerprinting detected on {} ({} severity)",
            rendered.page, rendered.severity
        );
    }
    Ok(())
}

fn nbs_cmd(cmd: NbsCmd) -> Result<()> {
    match cmd {
        NbsCmd::Check {
            origin_class,
            target,
            resolved,
            mode,
        } => {
            let cache = LearnCache::new();
            let host = nbs::Target::parse(&target)?.host;
            if let (NbsMode::LearnOnReply, Some(ip)) = (mode, resolved) {
                cache.observe_reply(&host, ip);
            }
            let d = nbs::decide(mode, origin_class, &target, resolved, &cache)?;
            println!("{}: {}", d.kind, d.reason);
            Ok(())
        }
        NbsCmd::Proxy {
            listen,
            mode,
            origin_class,
            log,
        } => {
            let mut cfg = ProxyConfig::new(listen, mode);
            cfg.origin_class = origin_class;
            cfg.log_path = log;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let proxy = Proxy::bind(cfg)
                    .await
                    .with_context(|| format!("binding {listen}"))?;
                println!("listening on {}", proxy.local_addr()?);
                io::stdout().flush()?;
                tokio::select! {
                    r = proxy.serve() => r.context("proxy stopped"),
                    _ = tokio::signal::ctrl_c() => Ok(()),
                }
            })
        }
    }
}
