use serde::{Deserialize, Serialize};

use super::RawPacket;

pub const ETHERNET_HEADER_LEN: usize = 14;
pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;
pub const ETHERTYPE_VLAN: u16 = 0x8100;
const IPPROTO_UDP: u8 = 17;
const DHCP_PORTS: [u16; 2] = [67, 68];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FilterReason {
    Kept,
    Arp,
    DhcpV4,
    TooShort,
    Malformed,
    /// Matched one of the extra EtherType / UDP port rules from the config.
    Configured,
}

impl FilterReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterReason::Kept => "kept",
            FilterReason::Arp => "arp",
            FilterReason::DhcpV4 => "dhcpv4",
            FilterReason::TooShort => "too_short",
            FilterReason::Malformed => "malformed",
            FilterReason::Configured => "configured",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterVerdict {
    pub kept: bool,
    pub reason: FilterReason,
}

impl FilterVerdict {
    fn keep() -> Self {
        Self {
            kept: true,
            reason: FilterReason::Kept,
        }
    }

    fn drop(reason: FilterReason) -> Self {
        Self { kept: false, reason }
    }
}

/// Which packets are discarded before vectorisation. ARP and DHCPv4 are on
/// by default; extra EtherTypes and UDP ports can be added.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRules {
    pub drop_arp: bool,
    pub drop_dhcpv4: bool,
    pub extra_ethertypes: Vec<u16>,
    pub extra_udp_ports: Vec<u16>,
}

impl Default for FilterRules {
    fn default() -> Self {
        Self {
            drop_arp: true,
            drop_dhcpv4: true,
            extra_ethertypes: Vec::new(),
            extra_udp_ports: Vec::new(),
        }
    }
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

/// Classify an Ethernet frame under the default rules.
pub fn classify_for_filter(packet: &RawPacket) -> FilterVerdict {
    classify_with_rules(packet, &FilterRules::default())
}

pub fn classify_with_rules(packet: &RawPacket, rules: &FilterRules) -> FilterVerdict {
    let b = &packet.bytes;
    if b.len() < ETHERNET_HEADER_LEN {
        return FilterVerdict::drop(FilterReason::TooShort);
    }
    let mut ethertype = be16(b, 12);
    let mut l3 = ETHERNET_HEADER_LEN;
    if ethertype == ETHERTYPE_VLAN {
        if b.len() < ETHERNET_HEADER_LEN + 4 {
            return FilterVerdict::drop(FilterReason::TooShort);
        }
        ethertype = be16(b, 16);
        l3 += 4;
    }

    if ethertype == ETHERTYPE_ARP && rules.drop_arp {
        return FilterVerdict::drop(FilterReason::Arp);
    }
    if rules.extra_ethertypes.contains(&ethertype) {
        return FilterVerdict::drop(FilterReason::Configured);
    }
    if ethertype != ETHERTYPE_IPV4 {
        return FilterVerdict::keep();
    }

    let ip = &b[l3..];
    if ip.len() < 20 {
        return FilterVerdict::drop(FilterReason::TooShort);
    }
    let version = ip[0] >> 4;
    let ihl = usize::from(ip[0] & 0x0F) * 4;
    if version != 4 || ihl < 20 {
        return FilterVerdict::drop(FilterReason::Malformed);
    }
    if ip.len() < ihl {
        return FilterVerdict::drop(FilterReason::TooShort);
    }
    let protocol = ip[9];
    let fragment_offset = be16(ip, 6) & 0x1FFF;
    if protocol != IPPROTO_UDP || fragment_offset != 0 {
        return FilterVerdict::keep();
    }
    let udp = &ip[ihl..];
    if udp.len() < 8 {
        return FilterVerdict::drop(FilterReason::TooShort);
    }
    let (src, dst) = (be16(udp, 0), be16(udp, 2));
    if rules.drop_dhcpv4 && (DHCP_PORTS.contains(&src) || DHCP_PORTS.contains(&dst)) {
        return FilterVerdict::drop(FilterReason::DhcpV4);
    }
    if rules.extra_udp_ports.contains(&src) || rules.extra_udp_ports.contains(&dst) {
        return FilterVerdict::drop(FilterReason::Configured);
    }
    FilterVerdict::keep()
}

/// Frame builders used by tests and fixture generation.
pub mod frames {
    use super::*;

    const MAC_A: [u8; 6] = [0x02, 0, 0, 0, 0, 0x01];
    const MAC_B: [u8; 6] = [0x02, 0, 0, 0, 0, 0x02];

    fn ethernet(ethertype: u16) -> Vec<u8> {
        let mut f = Vec::with_capacity(64);
        f.extend_from_slice(&MAC_B);
        f.extend_from_slice(&MAC_A);
        f.extend_from_slice(&ethertype.to_be_bytes());
        f
    }

    fn ipv4_header(protocol: u8, payload_len: usize) -> [u8; 20] {
        let total = (20 + payload_len) as u16;
        let mut h = [0u8; 20];
        h[0] = 0x45;
        h[2..4].copy_from_slice(&total.to_be_bytes());
        h[8] = 64;
        h[9] = protocol;
        h[12..16].copy_from_slice(&[10, 0, 0, 1]);
        h[16..20].copy_from_slice(&[10, 0, 0, 2]);
        h
    }

    pub fn arp() -> Vec<u8> {
        let mut f = ethernet(ETHERTYPE_ARP);
        // request: htype 1, ptype IPv4, hlen 6, plen 4, op 1
        f.extend_from_slice(&[0, 1, 8, 0, 6, 4, 0, 1]);
        f.extend_from_slice(&MAC_A);
        f.extend_from_slice(&[10, 0, 0, 1]);
        f.extend_from_slice(&[0; 6]);
        f.extend_from_slice(&[10, 0, 0, 2]);
        f
    }

    pub fn udp(src_port: u16, dst_port: u16, payload: &[u8]) -> Vec<u8> {
        let mut f = ethernet(ETHERTYPE_IPV4);
        f.extend_from_slice(&ipv4_header(IPPROTO_UDP, 8 + payload.len()));
        f.extend_from_slice(&src_port.to_be_bytes());
        f.extend_from_slice(&dst_port.to_be_bytes());
        f.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
        f.extend_from_slice(&[0, 0]);
        f.extend_from_slice(payload);
        f
    }

    pub fn tcp(src_port: u16, dst_port: u16, payload: &[u8]) -> Vec<u8> {
        let mut f = ethernet(ETHERTYPE_IPV4);
        f.extend_from_slice(&ipv4_header(6, 20 + payload.len()));
        f.extend_from_slice(&src_port.to_be_bytes());
        f.extend_from_slice(&dst_port.to_be_bytes());
        f.extend_from_slice(&[0, 0, 0, 1, 0, 0, 0, 0, 0x50, 0x18, 0xFF, 0xFF, 0, 0, 0, 0]);
        f.extend_from_slice(payload);
        f
    }

    pub fn dhcp_discover() -> Vec<u8> {
        udp(68, 67, &[1, 1, 6, 0, 0x39, 0x03, 0xF3, 0x26])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(bytes: Vec<u8>) -> FilterVerdict {
        classify_for_filter(&RawPacket::new(bytes))
    }

    #[test]
    fn arp_is_dropped() {
        assert_eq!(
            verdict(frames::arp()),
            FilterVerdict {
                kept: false,
                reason: FilterReason::Arp
            }
        );
    }

    #[test]
    fn dhcp_by_either_port_is_dropped() {
        assert_eq!(verdict(frames::udp(5000, 67, b"x")).reason, FilterReason::DhcpV4);
        assert_eq!(verdict(frames::udp(68, 5000, b"x")).reason, FilterReason::DhcpV4);
        assert_eq!(verdict(frames::dhcp_discover()).reason, FilterReason::DhcpV4);
        assert!(verdict(frames::udp(53, 5353, b"q")).kept);
    }

    #[test]
    fn https_tcp_is_kept() {
        assert_eq!(
            verdict(frames::tcp(51000, 443, &[0x17, 0x03, 0x03])),
            FilterVerdict {
                kept: true,
                reason: FilterReason::Kept
            }
        );
    }

    #[test]
    fn short_and_malformed_frames() {
        assert_eq!(verdict(vec![0; 10]).reason, FilterReason::TooShort);
        let mut f = frames::tcp(1, 2, b"");
        f.truncate(20);
        assert_eq!(verdict(f).reason, FilterReason::TooShort);
        let mut bad_version = frames::tcp(1, 2, b"");
        bad_version[14] = 0x65;
        assert_eq!(verdict(bad_version).reason, FilterReason::Malformed);
        let mut udp_cut = frames::udp(1, 67, b"");
        udp_cut.truncate(14 + 20 + 3);
        assert_eq!(verdict(udp_cut).reason, FilterReason::TooShort);
    }

    #[test]
    fn vlan_tagged_arp_is_recognised() {
        let mut f = frames::arp();
        let inner = f.split_off(12);
        f.extend_from_slice(&[0x81, 0x00, 0x00, 0x05]);
        f.extend_from_slice(&inner);
        assert_eq!(verdict(f).reason, FilterReason::Arp);
    }

    #[test]
    fn configured_rules_extend_the_filter() {
        let rules = FilterRules {
            extra_ethertypes: vec![0x86DD],
            extra_udp_ports: vec![53],
            ..FilterRules::default()
        };
        let mut v6 = frames::tcp(1, 2, b"");
        v6[12..14].copy_from_slice(&[0x86, 0xDD]);
        assert_eq!(classify_with_rules(&RawPacket::new(v6), &rules).reason, FilterReason::Configured);
        let dns = RawPacket::new(frames::udp(40000, 53, b"q"));
        assert_eq!(classify_with_rules(&dns, &rules).reason, FilterReason::Configured);
        let off = FilterRules {
            drop_arp: false,
            ..FilterRules::default()
        };
        assert!(classify_with_rules(&RawPacket::new(frames::arp()), &off).kept);
    }
}
