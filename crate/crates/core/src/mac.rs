//! 48-bit IEEE MAC addresses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A 48-bit MAC address.
///
/// Ordering is lexicographic on the octets, octet 0 most significant.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddress(pub [u8; 6]);

/// Fixed BSSID carried in addr3 of every AWDL frame.
pub const AWDL_BSSID: MacAddress = MacAddress([0x00, 0x25, 0x00, 0xff, 0x94, 0x73]);

impl MacAddress {
    pub const BROADCAST: MacAddress = MacAddress([0xff; 6]);

    pub const fn new(octets: [u8; 6]) -> Self {
        MacAddress(octets)
    }

    pub const fn octets(&self) -> [u8; 6] {
        self.0
    }

    /// Group (multicast or broadcast) address: I/G bit of octet 0 set.
    pub const fn is_multicast(&self) -> bool {
        self.0[0] & 0x01 != 0
    }

    pub(crate) fn from_slice(b: &[u8]) -> MacAddress {
        let mut o = [0u8; 6];
        o.copy_from_slice(&b[..6]);
        MacAddress(o)
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.0;
        write!(f, "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", o[0], o[1], o[2], o[3], o[4], o[5])
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid MAC address {0:?}")]
pub struct ParseMacError(pub String);

impl FromStr for MacAddress {
    type Err = ParseMacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseMacError(s.to_string());
        let mut octets = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for o in octets.iter_mut() {
            let part = parts.next().ok_or_else(err)?;
            if part.len() != 2 {
                return Err(err());
            }
            *o = u8::from_str_radix(part, 16).map_err(|_| err())?;
        }
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(MacAddress(octets))
    }
}

impl Serialize for MacAddress {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddress {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        assert_eq!(AWDL_BSSID.to_string(), "00:25:00:ff:94:73");
        assert_eq!("00:25:00:FF:94:73".parse::<MacAddress>().unwrap(), AWDL_BSSID);
        assert!("00:25:00:ff:94".parse::<MacAddress>().is_err());
        assert!("00:25:00:ff:94:73:01".parse::<MacAddress>().is_err());
        assert!("0:25:00:ff:94:73".parse::<MacAddress>().is_err());
    }

    #[test]
    fn ordering_is_octet_lexicographic() {
        let a = MacAddress([0x01, 0xff, 0xff, 0xff, 0xff, 0xff]);
        let b = MacAddress([0x02, 0, 0, 0, 0, 0]);
        assert!(a < b);
    }

    #[test]
    fn multicast_bit() {
        assert!(MacAddress([0x33, 0x33, 0, 0, 0, 1]).is_multicast());
        assert!(MacAddress::BROADCAST.is_multicast());
        assert!(!AWDL_BSSID.is_multicast());
    }
}
