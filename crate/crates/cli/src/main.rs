use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use awdl_core::analyzer::{analyze, dissect_capture, AnalysisReport, FrameRecord};
use awdl_core::engine::{run_loop, LogRecord, NodeConfig, NodeState, RunOptions, SOCIAL_CHANNELS};
use awdl_core::link::{Clock, FramePort, MemoryHostPort, NullPort, PcapReplayPort, SystemClock, VirtualClock};
use awdl_core::mac::MacAddress;
use awdl_core::sim::{run_scenario, Scenario, SimOptions};

#[derive(Parser)]
#[command(name = "awdl", version, about = "AWDL protocol engine, simulator and capture tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one node against a frame port.
    Daemon(DaemonArgs),
    /// Run a scenario file on the simulated radio.
    Sim(SimArgs),
    /// Print one record per frame of a capture.
    Dissect {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Election timeline and synchronization accuracy of a capture.
    Analyze {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(clap::Args)]
struct DaemonArgs {
    /// `pcap:IN[,OUT]` replays IN in virtual time and records our frames to
    /// OUT; `null` runs in real time with no radio.
    #[arg(long)]
    iface: PortSpec,
    #[arg(long, default_value_t = 6, value_parser = parse_channel)]
    channel: u8,
    /// Interface address; derived from the seed when absent.
    #[arg(long)]
    mac: Option<MacAddress>,
    #[arg(long)]
    metric: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "")]
    hostname: String,
    /// JSON-lines event log; stdout when absent.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Stop this long after the start. Without it a null port runs until
    /// killed and a pcap port runs until the capture ends.
    #[arg(long)]
    duration_ms: Option<u64>,
}

#[derive(clap::Args)]
struct SimArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    pcap_out: Option<PathBuf>,
    /// JSON-lines trace; stdout when absent.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
enum PortSpec {
    Pcap { input: PathBuf, output: Option<PathBuf> },
    Null,
}

impl FromStr for PortSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut parts = rest.split(',').filter(|p| !p.is_empty()).map(PathBuf::from);
        match kind {
            "pcap" => {
                let input = parts.next().ok_or("pcap port needs an input file: pcap:IN[,OUT]")?;
                Ok(PortSpec::Pcap { input, output: parts.next() })
            }
            "null" if rest.is_empty() => Ok(PortSpec::Null),
            "null" => Err("null port takes no arguments".into()),
            _ => Err(format!("unknown port kind {kind:?}, expected pcap:IN[,OUT] or null")),
        }
    }
}

fn parse_channel(s: &str) -> Result<u8, String> {
    let c: u8 = s.parse().map_err(|e| format!("{e}"))?;
    if SOCIAL_CHANNELS.contains(&c) {
        Ok(c)
    } else {
        Err(format!("channel must be one of {SOCIAL_CHANNELS:?}"))
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Daemon(args) => daemon(args),
        Command::Sim(args) => sim(args),
        Command::Dissect { file, json } => dissect(&file, json),
        Command::Analyze { file, json } => analyze_cmd(&file, json),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Locally administered unicast address derived from the seed.
fn seeded_mac(seed: u64) -> MacAddress {
    let b = seed.to_be_bytes();
    MacAddress([0x02, b[3], b[4], b[5], b[6], b[7]])
}

fn daemon(args: DaemonArgs) -> Result<()> {
    let mut config = NodeConfig::new(args.mac.unwrap_or_else(|| seeded_mac(args.seed)));
    config.channel = args.channel;
    config.metric = args.metric;
    config.rng_seed = args.seed;
    config.hostname = args.hostname;

    let (mut link, mut clock): (Box<dyn FramePort>, Box<dyn Clock>) = match &args.iface {
        PortSpec::Pcap { input, output } => {
            let mut port = PcapReplayPort::open(input, output.as_deref())
                .with_context(|| format!("opening {}", input.display()))?;
            let start = port.start_hint().unwrap_or_default();
            (Box::new(port), Box::new(VirtualClock::new(start)))
        }
        PortSpec::Null => (Box::new(NullPort), Box::new(SystemClock::new())),
    };
    let start = clock.now();
    let mut state = NodeState::new(config, start).context("invalid node configuration")?;

    let mut out = open_out(args.stats_out.as_deref())?;
    let mut write_err = None;
    let mut sink = |r: &LogRecord| {
        if write_err.is_none() {
            if let Err(e) = writeln!(out, "{}", r.to_json_line()) {
                write_err = Some(e);
            }
        }
    };
    let opts = RunOptions { until: args.duration_ms.map(|d| start + d * 1000) };
    let mut host = MemoryHostPort::new(Vec::new());
    let summary = run_loop(&mut state, link.as_mut(), &mut host, clock.as_mut(), &mut sink, opts)?;
    for p in state.peers.summaries(summary.ended_at) {
        let fields = serde_json::to_value(&p)?;
        sink(&LogRecord::new(summary.ended_at, "peer", fields));
    }
    if let Some(e) = write_err {
        return Err(e).context("writing stats");
    }
    drop(link);
    out.flush()?;
    eprintln!(
        "{}: {} steps, {} action frames sent, {} received, {} peers",
        state.mac(),
        summary.steps,
        summary.stats.af_sent,
        summary.stats.af_received,
        summary.peers
    );
    Ok(())
}

fn sim(args: SimArgs) -> Result<()> {
    let text = fs::read_to_string(&args.scenario).with_context(|| format!("reading {}", args.scenario.display()))?;
    let scenario = Scenario::from_toml(&text).with_context(|| format!("in {}", args.scenario.display()))?;
    let outcome = run_scenario(&scenario, SimOptions { record_pcap: args.pcap_out.is_some() })?;

    if let (Some(path), Some(bytes)) = (&args.pcap_out, &outcome.pcap) {
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut out = open_out(args.trace_out.as_deref())?;
    out.write_all(outcome.trace_json_lines().as_bytes())?;
    out.flush()?;

    eprintln!(
        "{} nodes, {} frames sent, {} delivered, {} dropped",
        outcome.nodes.len(),
        outcome.frames_sent,
        outcome.channel_delivered,
        outcome.channel_dropped
    );
    for e in &outcome.echoes {
        match e.replied_at {
            Some(t) => eprintln!("echo {} -> {} seq {}: rtt {} us", e.from, e.to, e.seq, t.0 - e.sent_at.0),
            None => eprintln!("echo {} -> {} seq {}: no reply", e.from, e.to, e.seq),
        }
    }
    for s in &outcome.streams {
        eprintln!(
            "stream {} {} -> {}: {}/{} bytes{}, {} segments, {} retransmitted",
            s.stream,
            s.from,
            s.to,
            s.received.len(),
            s.sent.len(),
            if s.received == s.sent { " intact" } else { "" },
            s.segments_sent,
            s.retransmissions
        );
    }
    Ok(())
}

fn dissect(file: &Path, json: bool) -> Result<()> {
    let cap = dissect_capture(file).with_context(|| format!("reading {}", file.display()))?;
    let mut out = open_out(None)?;
    if json {
        for r in &cap.records {
            writeln!(out, "{}", serde_json::to_string(r)?)?;
        }
    } else {
        writeln!(out, "{:>6} {:>14} {:>5}  {:<10} {:<17} {:<17}  info", "#", "t_us", "len", "class", "src", "dst")?;
        for r in &cap.records {
            writeln!(out, "{}", record_row(r))?;
        }
    }
    out.flush()?;
    if let Some(e) = &cap.tail_error {
        eprintln!("capture ends with an unreadable record: {e}");
    }
    Ok(())
}

fn opt_mac(m: Option<MacAddress>) -> String {
    m.map(|m| m.to_string()).unwrap_or_else(|| "-".into())
}

fn record_row(r: &FrameRecord) -> String {
    let class = serde_json::to_value(r.class).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let mut info = Vec::new();
    if let Some(a) = &r.action {
        info.push(a.subtype.clone());
        if let Some(e) = &a.election {
            info.push(format!("master {} dist {}", e.master_address, e.distance_to_master));
        }
        if let Some(s) = &a.sync {
            info.push(format!("aw {} rem {}tu ch {}", s.aw_seq, s.remaining_aw_tu, s.channel));
        }
        if let Some(h) = &a.hostname {
            info.push(format!("host {h:?}"));
        }
    }
    if let Some(d) = &r.data {
        info.push(format!("seq {} type {:#06x} {} bytes", d.sequence, d.ethertype, d.payload_len));
    }
    for e in &r.parse_errors {
        info.push(format!("[{}]", e.kind));
    }
    format!(
        "{:>6} {:>14} {:>5}  {:<10} {:<17} {:<17}  {}",
        r.index,
        r.t.0,
        r.len,
        class,
        opt_mac(r.src),
        opt_mac(r.dst),
        info.join(", ")
    )
}

fn analyze_cmd(file: &Path, json: bool) -> Result<()> {
    let cap = dissect_capture(file).with_context(|| format!("reading {}", file.display()))?;
    let report = analyze(&cap);
    let mut out = open_out(None)?;
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        write_report(&mut out, &report)?;
    }
    out.flush()?;
    Ok(())
}

fn write_report(out: &mut dyn Write, r: &AnalysisReport) -> io::Result<()> {
    writeln!(
        out,
        "frames: {} ({} action, {} data, {} other, {} with errors)",
        r.frames, r.action_frames, r.data_frames, r.other_frames, r.frames_with_errors
    )?;
    writeln!(out, "nodes: {}", r.nodes.len())?;
    for n in &r.nodes {
        writeln!(out, "  {n}")?;
    }
    writeln!(out, "\nelection timeline:")?;
    writeln!(out, "{:>14}  {:<17}  {:<17} {:>4}", "t_us", "node", "master", "dist")?;
    for e in &r.timeline {
        let mark = if e.initial { "" } else { "  (change)" };
        writeln!(out, "{:>14}  {:<17}  {:<17} {:>4}{mark}", e.t.0, e.node, e.master, e.distance)?;
    }
    writeln!(out, "\nsynchronization accuracy:")?;
    match (&r.sync, &r.sync_unavailable) {
        (Some(s), _) => {
            writeln!(out, "{:<17}  {:<17} {:>8} {:>10} {:>8}", "a", "b", "samples", "median_us", "max_us")?;
            for p in &s.pairs {
                let show = |v: Option<u32>| v.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
                writeln!(
                    out,
                    "{:<17}  {:<17} {:>8} {:>10} {:>8}",
                    p.a,
                    p.b,
                    p.samples,
                    show(p.median_us),
                    show(p.max_us)
                )?;
            }
        }
        (None, Some(why)) => writeln!(out, "  unavailable: {why}")?,
        (None, None) => writeln!(out, "  unavailable")?,
    }
    if let Some(e) = &r.tail_error {
        writeln!(out, "\ncapture ends with an unreadable record: {e}")?;
    }
    Ok(())
}
