//! Classic libpcap file format: a 24-byte global header followed by records,
//! each a 16-byte header (`ts_sec`, `ts_usec`, `incl_len`, `orig_len`) and
//! `incl_len` bytes of frame data. The magic number fixes the byte order of
//! every later integer.

use std::io::Write;

use super::PcapError;

pub const MAGIC_MICROS: u32 = 0xA1B2_C3D4;
pub const MAGIC_MICROS_SWAPPED: u32 = 0xD4C3_B2A1;
pub const MAGIC_NANOS: u32 = 0xA1B2_3C4D;
pub const MAGIC_NANOS_SWAPPED: u32 = 0x4D3C_B2A1;
/// Section header block type that opens every pcapng file.
pub const PCAPNG_BLOCK_TYPE: u32 = 0x0A0D_0D0A;

pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;

pub const LINKTYPE_ETHERNET: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    fn u32(self, b: [u8; 4]) -> u32 {
        match self {
            ByteOrder::Little => u32::from_le_bytes(b),
            ByteOrder::Big => u32::from_be_bytes(b),
        }
    }

    fn u16(self, b: [u8; 2]) -> u16 {
        match self {
            ByteOrder::Little => u16::from_le_bytes(b),
            ByteOrder::Big => u16::from_be_bytes(b),
        }
    }

    fn put_u32(self, v: u32) -> [u8; 4] {
        match self {
            ByteOrder::Little => v.to_le_bytes(),
            ByteOrder::Big => v.to_be_bytes(),
        }
    }

    fn put_u16(self, v: u16) -> [u8; 2] {
        match self {
            ByteOrder::Little => v.to_le_bytes(),
            ByteOrder::Big => v.to_be_bytes(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcapGlobalHeader {
    /// Byte order the file was written in, as implied by its magic.
    pub byte_order: ByteOrder,
    pub version_major: u16,
    pub version_minor: u16,
    pub thiszone: i32,
    pub sigfigs: u32,
    pub snaplen: u32,
    pub network: u32,
}

impl PcapGlobalHeader {
    /// Ethernet capture header with the conventional 2.4 version.
    pub fn ethernet(byte_order: ByteOrder, snaplen: u32) -> Self {
        Self {
            byte_order,
            version_major: 2,
            version_minor: 4,
            thiszone: 0,
            sigfigs: 0,
            snaplen,
            network: LINKTYPE_ETHERNET,
        }
    }

    /// The magic as it reads when the file's own byte order is applied.
    pub fn magic(&self) -> u32 {
        MAGIC_MICROS
    }

    pub fn to_bytes(&self) -> [u8; GLOBAL_HEADER_LEN] {
        let o = self.byte_order;
        let mut out = [0u8; GLOBAL_HEADER_LEN];
        out[0..4].copy_from_slice(&o.put_u32(MAGIC_MICROS));
        out[4..6].copy_from_slice(&o.put_u16(self.version_major));
        out[6..8].copy_from_slice(&o.put_u16(self.version_minor));
        out[8..12].copy_from_slice(&o.put_u32(self.thiszone as u32));
        out[12..16].copy_from_slice(&o.put_u32(self.sigfigs));
        out[16..20].copy_from_slice(&o.put_u32(self.snaplen));
        out[20..24].copy_from_slice(&o.put_u32(self.network));
        out
    }

    pub fn parse(data: &[u8]) -> Result<Self, PcapError> {
        if data.len() < GLOBAL_HEADER_LEN {
            return Err(PcapError::Truncated {
                offset: data.len(),
                needed: GLOBAL_HEADER_LEN - data.len(),
            });
        }
        let raw = [data[0], data[1], data[2], data[3]];
        let byte_order = match u32::from_le_bytes(raw) {
            MAGIC_MICROS => ByteOrder::Little,
            MAGIC_MICROS_SWAPPED => ByteOrder::Big,
            MAGIC_NANOS | MAGIC_NANOS_SWAPPED => return Err(PcapError::NanosecondPrecision),
            PCAPNG_BLOCK_TYPE => return Err(PcapError::Pcapng),
            other => return Err(PcapError::BadMagic(other)),
        };
        let o = byte_order;
        let u32_at = |i: usize| o.u32([data[i], data[i + 1], data[i + 2], data[i + 3]]);
        Ok(Self {
            byte_order,
            version_major: o.u16([data[4], data[5]]),
            version_minor: o.u16([data[6], data[7]]),
            thiszone: u32_at(8) as i32,
            sigfigs: u32_at(12),
            snaplen: u32_at(16),
            network: u32_at(20),
        })
    }
}

/// One captured frame.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawPacket {
    pub ts_sec: u32,
    pub ts_usec: u32,
    /// On-wire length; may exceed the captured length.
    pub orig_len: u32,
    pub bytes: Vec<u8>,
}

impl RawPacket {
    pub fn new(bytes: Vec<u8>) -> Self {
        let orig_len = bytes.len() as u32;
        Self {
            ts_sec: 0,
            ts_usec: 0,
            orig_len,
            bytes,
        }
    }

    /// Captured length, always `bytes.len()`.
    pub fn incl_len(&self) -> u32 {
        self.bytes.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapCapture {
    pub header: PcapGlobalHeader,
    pub packets: Vec<RawPacket>,
}

/// Parse a complete classic PCAP byte stream.
pub fn parse_pcap(data: &[u8]) -> Result<PcapCapture, PcapError> {
    let header = PcapGlobalHeader::parse(data)?;
    let o = header.byte_order;
    let mut packets = Vec::new();
    let mut offset = GLOBAL_HEADER_LEN;
    while offset < data.len() {
        let remaining = data.len() - offset;
        if remaining < RECORD_HEADER_LEN {
            return Err(PcapError::Truncated {
                offset,
                needed: RECORD_HEADER_LEN - remaining,
            });
        }
        let rec = &data[offset..offset + RECORD_HEADER_LEN];
        let u32_at = |i: usize| o.u32([rec[i], rec[i + 1], rec[i + 2], rec[i + 3]]);
        let ts_sec = u32_at(0);
        let ts_usec = u32_at(4);
        let incl_len = u32_at(8);
        let orig_len = u32_at(12);
        if incl_len > header.snaplen {
            return Err(PcapError::OversizedRecord {
                offset,
                incl_len,
                snaplen: header.snaplen,
            });
        }
        let body_start = offset + RECORD_HEADER_LEN;
        let body_len = incl_len as usize;
        let available = data.len() - body_start;
        if available < body_len {
            return Err(PcapError::Truncated {
                offset: body_start,
                needed: body_len - available,
            });
        }
        packets.push(RawPacket {
            ts_sec,
            ts_usec,
            orig_len,
            bytes: data[body_start..body_start + body_len].to_vec(),
        });
        offset = body_start + body_len;
    }
    Ok(PcapCapture { header, packets })
}

/// Streaming writer producing files that [`parse_pcap`] reads back exactly.
pub struct PcapWriter<W: Write> {
    out: W,
    header: PcapGlobalHeader,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut out: W, header: PcapGlobalHeader) -> std::io::Result<Self> {
        out.write_all(&header.to_bytes())?;
        Ok(Self { out, header })
    }

    pub fn write_packet(&mut self, packet: &RawPacket) -> Result<(), PcapError> {
        if packet.incl_len() > self.header.snaplen {
            return Err(PcapError::OversizedRecord {
                offset: 0,
                incl_len: packet.incl_len(),
                snaplen: self.header.snaplen,
            });
        }
        let o = self.header.byte_order;
        let mut rec = [0u8; RECORD_HEADER_LEN];
        rec[0..4].copy_from_slice(&o.put_u32(packet.ts_sec));
        rec[4..8].copy_from_slice(&o.put_u32(packet.ts_usec));
        rec[8..12].copy_from_slice(&o.put_u32(packet.incl_len()));
        rec[12..16].copy_from_slice(&o.put_u32(packet.orig_len));
        self.out.write_all(&rec)?;
        self.out.write_all(&packet.bytes)?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Serialize a whole capture into memory.
pub fn write_pcap(header: &PcapGlobalHeader, packets: &[RawPacket]) -> Result<Vec<u8>, PcapError> {
    let mut w = PcapWriter::new(Vec::new(), *header)?;
    for p in packets {
        w.write_packet(p)?;
    }
    Ok(w.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_le() -> Vec<u8> {
        let mut f = vec![
            0xD4, 0xC3, 0xB2, 0xA1, // magic, little-endian file
            0x02, 0x00, 0x04, 0x00, // version 2.4
            0x00, 0x00, 0x00, 0x00, // thiszone
            0x00, 0x00, 0x00, 0x00, // sigfigs
            0xFF, 0xFF, 0x00, 0x00, // snaplen 65535
            0x01, 0x00, 0x00, 0x00, // ethernet
        ];
        f.extend_from_slice(&[
            0x01, 0x00, 0x00, 0x00, // ts_sec
            0x02, 0x00, 0x00, 0x00, // ts_usec
            0x04, 0x00, 0x00, 0x00, // incl_len
            0x04, 0x00, 0x00, 0x00, // orig_len
            0xDE, 0xAD, 0xBE, 0xEF,
        ]);
        f
    }

    /// Same capture with every integer field stored big-endian.
    fn minimal_be() -> Vec<u8> {
        let mut f = vec![
            0xA1, 0xB2, 0xC3, 0xD4, 0x00, 0x02, 0x00, 0x04, 0, 0, 0, 0, 0, 0, 0, 0, 0x00, 0x00, 0xFF, 0xFF, 0, 0, 0, 1,
        ];
        f.extend_from_slice(&[0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 4, 0, 0, 0, 4, 0xDE, 0xAD, 0xBE, 0xEF]);
        f
    }

    #[test]
    fn parses_minimal_file() {
        let cap = parse_pcap(&minimal_le()).unwrap();
        assert_eq!(cap.header.snaplen, 65535);
        assert_eq!(cap.header.network, LINKTYPE_ETHERNET);
        assert_eq!(cap.packets.len(), 1);
        assert_eq!(cap.packets[0].bytes, vec![0xDE, 0xAD, 0xBE, 0xEF]);
        assert_eq!(cap.packets[0].incl_len(), 4);
    }

    #[test]
    fn swapped_file_parses_identically() {
        let le = parse_pcap(&minimal_le()).unwrap();
        let be = parse_pcap(&minimal_be()).unwrap();
        assert_eq!(be.header.byte_order, ByteOrder::Big);
        assert_eq!(le.packets, be.packets);
        assert_eq!(
            PcapGlobalHeader {
                byte_order: ByteOrder::Little,
                ..be.header
            },
            le.header
        );
        assert_eq!(write_pcap(&be.header, &be.packets).unwrap(), minimal_be());
        assert_eq!(write_pcap(&le.header, &le.packets).unwrap(), minimal_le());
    }

    #[test]
    fn rejects_unknown_and_unsupported_magics() {
        let mut f = minimal_le();
        f[0] = 0x00;
        assert!(matches!(parse_pcap(&f), Err(PcapError::BadMagic(_))));
        f[0..4].copy_from_slice(&MAGIC_NANOS.to_le_bytes());
        assert!(matches!(parse_pcap(&f), Err(PcapError::NanosecondPrecision)));
        f[0..4].copy_from_slice(&MAGIC_NANOS.to_be_bytes());
        assert!(matches!(parse_pcap(&f), Err(PcapError::NanosecondPrecision)));
        f[0..4].copy_from_slice(&PCAPNG_BLOCK_TYPE.to_le_bytes());
        assert!(matches!(parse_pcap(&f), Err(PcapError::Pcapng)));
    }

    #[test]
    fn truncation_reports_offset() {
        let f = minimal_le();
        match parse_pcap(&f[..f.len() - 1]) {
            Err(PcapError::Truncated { offset, needed }) => {
                assert_eq!(offset, 40);
                assert_eq!(needed, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_pcap(&f[..30]) {
            Err(PcapError::Truncated { offset, .. }) => assert_eq!(offset, 24),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_pcap(&f[..10]), Err(PcapError::Truncated { .. })));
    }

    #[test]
    fn oversized_record_is_rejected() {
        let mut f = minimal_le();
        f[16..20].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            parse_pcap(&f),
            Err(PcapError::OversizedRecord {
                incl_len: 4,
                snaplen: 2,
                ..
            })
        ));
    }

    #[test]
    fn header_only_file_has_no_packets() {
        let f = minimal_le();
        let cap = parse_pcap(&f[..24]).unwrap();
        assert!(cap.packets.is_empty());
    }
}
