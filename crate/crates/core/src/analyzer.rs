//! Offline capture analysis: per-frame dissection, election timelines and
//! synchronisation accuracy.
//!
//! Timing analysis uses capture timestamps only. A frame's sync parameters
//! say how far into its availability window the sender was; subtracting that
//! from the capture time places the sender's window grid on the capture
//! clock, where grids of different senders can be compared.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{
    classify_frame, decode_election_params, decode_hostname, decode_sync_params, parse_action_frame, parse_data_frame,
    tlv_type, ActionSubtype, CodecError, ElectionParams, FrameClass, Ieee80211Header,
};
use crate::link::{LinkFrame, PcapError, PcapReader};
use crate::mac::MacAddress;
use crate::sync::sync_error;
use crate::time::{TimeMicros, TU_MICROS};

#[derive(Debug, thiserror::Error)]
pub enum AnalyzerError {
    #[error(transparent)]
    Pcap(#[from] PcapError),
    #[error("sync accuracy needs frames with sync parameters from at least 2 nodes, found {nodes}")]
    InsufficientData { nodes: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    pub kind: String,
    pub message: String,
}

impl From<&CodecError> for ParseIssue {
    fn from(e: &CodecError) -> Self {
        ParseIssue { kind: e.kind().to_string(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncSummary {
    pub master: MacAddress,
    pub aw_seq: u16,
    pub remaining_aw_tu: u16,
    pub aw_common_tu: u16,
    pub af_period_tu: u16,
    pub tx_counter: u16,
    pub channel: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSummary {
    pub subtype: String,
    /// 802.11 sequence number.
    pub seq: u16,
    pub phy_tx_time: u32,
    pub target_tx_time: u32,
    /// TLV types in wire order.
    pub tlv_types: Vec<u8>,
    pub election: Option<ElectionParams>,
    pub sync: Option<SyncSummary>,
    pub hostname: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSummary {
    pub sequence: u16,
    pub ethertype: u16,
    pub payload_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    #[serde(rename = "t_us")]
    pub t: TimeMicros,
    pub len: usize,
    pub class: FrameClass,
    pub src: Option<MacAddress>,
    pub dst: Option<MacAddress>,
    pub action: Option<ActionSummary>,
    pub data: Option<DataSummary>,
    pub parse_errors: Vec<ParseIssue>,
}

fn subtype_name(s: ActionSubtype) -> String {
    match s {
        ActionSubtype::Psf => "psf".into(),
        ActionSubtype::Mif => "mif".into(),
        ActionSubtype::Unknown(n) => format!("unknown({n})"),
    }
}

/// Dissects one frame. Never fails: problems land in `parse_errors`, and a
/// frame that cannot be parsed as what its headers claim becomes `Other`.
pub fn dissect_frame(index: usize, f: &LinkFrame) -> FrameRecord {
    let hdr = Ieee80211Header::parse(&f.bytes).ok();
    let mut rec = FrameRecord {
        index,
        t: f.timestamp,
        len: f.bytes.len(),
        class: classify_frame(&f.bytes),
        src: hdr.map(|h| h.addr2),
        dst: hdr.map(|h| h.addr1),
        action: None,
        data: None,
        parse_errors: Vec::new(),
    };
    match rec.class {
        FrameClass::AwdlAction => match parse_action_frame(&f.bytes) {
            Ok(af) => {
                let mut summary = ActionSummary {
                    subtype: subtype_name(af.subtype),
                    seq: af.hdr.sequence_number(),
                    phy_tx_time: af.phy_tx_time,
                    target_tx_time: af.target_tx_time,
                    tlv_types: af.tlvs.iter().map(|t| t.tlv_type).collect(),
                    election: None,
                    sync: None,
                    hostname: None,
                };
                if let Some(t) = af.find_tlv(tlv_type::ELECTION_PARAMS) {
                    match decode_election_params(t) {
                        Ok(e) => summary.election = Some(e),
                        Err(e) => rec.parse_errors.push((&e).into()),
                    }
                }
                if let Some(t) = af.find_tlv(tlv_type::SYNC_PARAMS) {
                    match decode_sync_params(t) {
                        Ok(s) => {
                            summary.sync = Some(SyncSummary {
                                master: s.master_address,
                                aw_seq: s.aw_seq_number,
                                remaining_aw_tu: s.remaining_aw_length,
                                aw_common_tu: s.aw_common_length,
                                af_period_tu: s.af_period,
                                tx_counter: s.tx_counter,
                                channel: s.master_channel,
                            })
                        }
                        Err(e) => rec.parse_errors.push((&e).into()),
                    }
                }
                if let Some(t) = af.find_tlv(tlv_type::HOSTNAME) {
                    summary.hostname = decode_hostname(t).ok();
                }
                rec.action = Some(summary);
            }
            Err(e) => {
                rec.class = FrameClass::Other;
                rec.parse_errors.push((&e).into());
            }
        },
        FrameClass::AwdlData => match parse_data_frame(&f.bytes) {
            Ok(d) => {
                rec.data = Some(DataSummary {
                    sequence: d.header.sequence,
                    ethertype: d.header.ethertype,
                    payload_len: d.payload.len(),
                })
            }
            Err(e) => {
                rec.class = FrameClass::Other;
                rec.parse_errors.push((&e).into());
            }
        },
        FrameClass::Other => {}
    }
    rec
}

#[derive(Debug, Clone, Default)]
pub struct Capture {
    pub records: Vec<FrameRecord>,
    /// Error that ended the file early, such as a truncated final record.
    pub tail_error: Option<String>,
}

/// Dissects every record of a pcap stream. Only an unreadable file header is
/// an error; a damaged tail ends the capture and is reported in `tail_error`.
pub fn dissect_reader<R: Read>(input: R) -> Result<Capture, AnalyzerError> {
    let mut reader = PcapReader::new(input)?;
    let linktype = reader.linktype();
    let mut cap = Capture::default();
    loop {
        match reader.next_record() {
            Ok(None) => break,
            Ok(Some(r)) => {
                let index = cap.records.len();
                match r.to_link_frame(linktype) {
                    Ok(f) => cap.records.push(dissect_frame(index, &f)),
                    Err(e) => cap.records.push(FrameRecord {
                        index,
                        t: r.timestamp,
                        len: r.data.len(),
                        class: FrameClass::Other,
                        src: None,
                        dst: None,
                        action: None,
                        data: None,
                        parse_errors: vec![ParseIssue { kind: "BadRadiotap".into(), message: e.to_string() }],
                    }),
                }
            }
            Err(e) => {
                cap.tail_error = Some(e.to_string());
                break;
            }
        }
    }
    Ok(cap)
}

pub fn dissect_capture(path: &Path) -> Result<Capture, AnalyzerError> {
    dissect_reader(BufReader::new(File::open(path).map_err(PcapError::from)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    #[serde(rename = "t_us")]
    pub t: TimeMicros,
    pub node: MacAddress,
    pub master: MacAddress,
    pub distance: u32,
    /// First advertisement seen from this node.
    pub initial: bool,
}

/// Each node's first advertised (master, distance) and every later change,
/// in capture order.
pub fn election_timeline(records: &[FrameRecord]) -> Vec<TimelineEntry> {
    let mut last: BTreeMap<MacAddress, (MacAddress, u32)> = BTreeMap::new();
    let mut out = Vec::new();
    for r in records {
        let (Some(node), Some(e)) = (r.src, r.action.as_ref().and_then(|a| a.election)) else {
            continue;
        };
        let cur = (e.master_address, e.distance_to_master);
        let prev = last.insert(node, cur);
        if prev != Some(cur) {
            out.push(TimelineEntry { t: r.t, node, master: cur.0, distance: cur.1, initial: prev.is_none() });
        }
    }
    out
}

/// Sources of all AWDL action frames.
pub fn peer_set(records: &[FrameRecord]) -> BTreeSet<MacAddress> {
    records.iter().filter(|r| r.class == FrameClass::AwdlAction).filter_map(|r| r.src).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairAccuracy {
    pub a: MacAddress,
    pub b: MacAddress,
    pub samples: usize,
    pub median_us: Option<u32>,
    pub max_us: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncAccuracyReport {
    pub pairs: Vec<PairAccuracy>,
}

#[derive(Debug, Clone, Copy)]
struct PhaseSample {
    t: TimeMicros,
    master: MacAddress,
    /// Predicted start of the sender's next window, capture clock.
    next_aw: TimeMicros,
    aw_duration: u32,
    af_period: u64,
}

fn phase_sample(r: &FrameRecord) -> Option<PhaseSample> {
    let s = r.action.as_ref()?.sync.as_ref()?;
    if s.aw_common_tu == 0 || s.remaining_aw_tu > s.aw_common_tu {
        return None;
    }
    Some(PhaseSample {
        t: r.t,
        master: s.master,
        next_aw: r.t + s.remaining_aw_tu as u64 * TU_MICROS,
        aw_duration: s.aw_common_tu as u32 * TU_MICROS as u32,
        af_period: s.af_period_tu as u64 * TU_MICROS,
    })
}

/// Lower median of a non-empty sample.
fn median(v: &mut [u32]) -> u32 {
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Pairwise window-phase error between nodes that advertise the same
/// master. Each frame of `a` is matched with the nearest frame of `b` sent
/// within one action-frame period.
pub fn sync_accuracy(records: &[FrameRecord]) -> Result<SyncAccuracyReport, AnalyzerError> {
    let mut by_node: BTreeMap<MacAddress, Vec<PhaseSample>> = BTreeMap::new();
    for r in records {
        if let (Some(src), Some(s)) = (r.src, phase_sample(r)) {
            by_node.entry(src).or_default().push(s);
        }
    }
    if by_node.len() < 2 {
        return Err(AnalyzerError::InsufficientData { nodes: by_node.len() });
    }
    let nodes: Vec<&MacAddress> = by_node.keys().collect();
    let mut pairs = Vec::new();
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            let (sa, sb) = (&by_node[*a], &by_node[*b]);
            let mut errors = Vec::new();
            for x in sa {
                let nearest = sb
                    .iter()
                    .filter(|y| y.master == x.master && y.aw_duration == x.aw_duration)
                    .filter(|y| x.t.0.abs_diff(y.t.0) <= x.af_period.max(y.af_period))
                    .min_by_key(|y| x.t.0.abs_diff(y.t.0));
                if let Some(y) = nearest {
                    errors.push(sync_error(x.next_aw, y.next_aw, x.aw_duration));
                }
            }
            let max_us = errors.iter().copied().max();
            let median_us = (!errors.is_empty()).then(|| median(&mut errors));
            pairs.push(PairAccuracy { a: **a, b: **b, samples: errors.len(), median_us, max_us });
        }
    }
    Ok(SyncAccuracyReport { pairs })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub frames: usize,
    pub action_frames: usize,
    pub data_frames: usize,
    pub other_frames: usize,
    pub frames_with_errors: usize,
    pub nodes: BTreeSet<MacAddress>,
    pub timeline: Vec<TimelineEntry>,
    pub sync: Option<SyncAccuracyReport>,
    /// Why `sync` is absent.
    pub sync_unavailable: Option<String>,
    pub tail_error: Option<String>,
}

pub fn analyze(cap: &Capture) -> AnalysisReport {
    let count = |c: FrameClass| cap.records.iter().filter(|r| r.class == c).count();
    let (sync, sync_unavailable) = match sync_accuracy(&cap.records) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    AnalysisReport {
        frames: cap.records.len(),
        action_frames: count(FrameClass::AwdlAction),
        data_frames: count(FrameClass::AwdlData),
        other_frames: count(FrameClass::Other),
        frames_with_errors: cap.records.iter().filter(|r| !r.parse_errors.is_empty()).count(),
        nodes: peer_set(&cap.records),
        timeline: election_timeline(&cap.records),
        sync,
        sync_unavailable,
        tail_error: cap.tail_error.clone(),
    }
}
