//! Reading labelled PCAP captures and discarding packets that carry no
//! application signal (ARP, DHCPv4) before vectorisation.

mod filter;
mod format;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use filter::{
    classify_for_filter, classify_with_rules, frames, FilterReason, FilterRules, FilterVerdict, ETHERNET_HEADER_LEN,
};
pub use format::{
    parse_pcap, write_pcap, ByteOrder, PcapCapture, PcapGlobalHeader, PcapWriter, RawPacket, GLOBAL_HEADER_LEN,
    LINKTYPE_ETHERNET, MAGIC_MICROS, MAGIC_MICROS_SWAPPED, MAGIC_NANOS, RECORD_HEADER_LEN,
};

#[derive(Debug, thiserror::Error)]
pub enum PcapError {
    #[error("unrecognised pcap magic 0x{0:08X}")]
    BadMagic(u32),
    #[error("pcapng captures are not supported; convert to classic pcap first")]
    Pcapng,
    #[error("nanosecond-precision pcap captures are not supported")]
    NanosecondPrecision,
    #[error("truncated capture at byte offset {offset} ({needed} more bytes needed)")]
    Truncated { offset: usize, needed: usize },
    #[error("record at byte offset {offset} has incl_len {incl_len} > snaplen {snaplen}")]
    OversizedRecord { offset: usize, incl_len: u32, snaplen: u32 },
    #[error("unsupported link type {0} (only Ethernet, 1, is accepted)")]
    UnsupportedLinkType(u32),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: Box<PcapError> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PcapError {
    fn in_file(self, path: &Path) -> Self {
        PcapError::File {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}

/// One capture file and the application class all its packets belong to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub filter: FilterRules,
    /// Drop the 14-byte Ethernet header from the bytes fed to vectorisation.
    pub strip_ethernet: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPacket {
    pub packet: RawPacket,
    pub label: usize,
    feature_offset: usize,
}

impl LabeledPacket {
    pub fn new(packet: RawPacket, label: usize) -> Self {
        Self {
            packet,
            label,
            feature_offset: 0,
        }
    }

    /// Bytes that go into the packet byte vector.
    pub fn feature_bytes(&self) -> &[u8] {
        let start = self.feature_offset.min(self.packet.bytes.len());
        &self.packet.bytes[start..]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileTally {
    pub path: String,
    pub label: usize,
    pub total: usize,
    pub kept: usize,
    /// Dropped packets keyed by reason name.
    pub dropped: BTreeMap<String, usize>,
}

impl FileTally {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    #[serde(rename = "file")]
    pub files: Vec<FileTally>,
}

impl IngestReport {
    pub fn total_kept(&self) -> usize {
        self.files.iter().map(|f| f.kept).sum()
    }

    /// Dropped counts summed over all files.
    pub fn dropped_by_reason(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for f in &self.files {
            for (k, v) in &f.dropped {
                *out.entry(k.clone()).or_insert(0) += v;
            }
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ingest report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutput {
    pub packets: Vec<LabeledPacket>,
    pub report: IngestReport,
}

/// Parse one file, reject non-Ethernet captures, and filter its packets.
pub fn ingest_file(path: &Path, label: usize, config: &IngestConfig) -> Result<(Vec<LabeledPacket>, FileTally), PcapError> {
    let data = std::fs::read(path).map_err(|e| PcapError::Io(e).in_file(path))?;
    let capture = parse_pcap(&data).map_err(|e| e.in_file(path))?;
    if capture.header.network != LINKTYPE_ETHERNET {
        return Err(PcapError::UnsupportedLinkType(capture.header.network).in_file(path));
    }
    let mut tally = FileTally {
        path: path.display().to_string(),
        label,
        total: capture.packets.len(),
        kept: 0,
        dropped: BTreeMap::new(),
    };
    let offset = if config.strip_ethernet { ETHERNET_HEADER_LEN } else { 0 };
    let mut kept = Vec::new();
    for packet in capture.packets {
        let verdict = classify_with_rules(&packet, &config.filter);
        if verdict.kept {
            tally.kept += 1;
            kept.push(LabeledPacket {
                packet,
                label,
                feature_offset: offset,
            });
        } else {
            *tally.dropped.entry(verdict.reason.as_str().to_string()).or_insert(0) += 1;
        }
    }
    Ok((kept, tally))
}

/// Ingest every mapped file in order, resolving relative paths against
/// `base_dir`. Packets are concatenated in file order.
pub fn ingest_directory(base_dir: &Path, inputs: &[InputFile], config: &IngestConfig) -> Result<IngestOutput, PcapError> {
    let mut packets = Vec::new();
    let mut report = IngestReport::default();
    for input in inputs {
        let path = if input.path.is_absolute() {
            input.path.clone()
        } else {
            base_dir.join(&input.path)
        };
        let (kept, tally) = ingest_file(&path, input.label, config)?;
        packets.extend(kept);
        report.files.push(tally);
    }
    Ok(IngestOutput { packets, report })
}
