//! `hvcC` (HEVCDecoderConfigurationRecord). Only the NAL length size and the
//! parameter-set arrays are interpreted; the profile/level bytes are carried
//! through unchanged.

use crate::bytes::{put_u16, Reader};

use super::{hevc_nal_type, FourCc, IsobmffError};

/// Bytes 0..21 of the record: version, profile, tier, level and format fields.
pub const HVCC_GENERAL_LEN: usize = 21;

/// Main profile, level 3.1, 4:2:0 8-bit. Used when writing configs from scratch.
pub const DEFAULT_GENERAL: [u8; HVCC_GENERAL_LEN] = [
    0x01, 0x01, 0x60, 0x00, 0x00, 0x00, 0x90, 0x00, 0x00, 0x00, 0x00, 0x00, 0x5d, 0xf0, 0x00,
    0xfc, 0xfd, 0xf8, 0xf8, 0x00, 0x00,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HevcConfig {
    pub general: [u8; HVCC_GENERAL_LEN],
    /// Upper six bits of byte 21 (frame rate and temporal layer fields).
    pub temporal_bits: u8,
    pub nal_length_size: u8,
    /// Parameter-set NAL units (header included) in array order.
    pub parameter_sets: Vec<Vec<u8>>,
}

impl HevcConfig {
    pub fn new(nal_length_size: u8, parameter_sets: Vec<Vec<u8>>) -> Self {
        HevcConfig {
            general: DEFAULT_GENERAL,
            temporal_bits: 0x0c,
            nal_length_size,
            parameter_sets,
        }
    }

    pub fn parse(payload: &[u8]) -> Result<Self, IsobmffError> {
        let tag = FourCc(*b"hvcC");
        let short = |e| IsobmffError::short(tag, e);
        let mut r = Reader::new(payload);
        let mut general = [0u8; HVCC_GENERAL_LEN];
        general.copy_from_slice(r.bytes(HVCC_GENERAL_LEN).map_err(short)?);
        let b21 = r.u8().map_err(short)?;
        let nal_length_size = (b21 & 0x03) + 1;
        if nal_length_size == 3 {
            return Err(IsobmffError::BadLengthSize(nal_length_size));
        }
        let num_arrays = r.u8().map_err(short)?;
        let mut parameter_sets = Vec::new();
        for _ in 0..num_arrays {
            let _type_byte = r.u8().map_err(short)?;
            let count = r.u16().map_err(short)?;
            for _ in 0..count {
                let len = r.u16().map_err(short)? as usize;
                parameter_sets.push(r.bytes(len).map_err(short)?.to_vec());
            }
        }
        Ok(HevcConfig {
            general,
            temporal_bits: b21 & 0xfc,
            nal_length_size,
            parameter_sets,
        })
    }

    /// Serialize the record. Parameter sets are grouped into one array per NAL
    /// type, arrays ordered by first appearance.
    pub fn to_bytes(&self) -> Result<Vec<u8>, IsobmffError> {
        if !matches!(self.nal_length_size, 1 | 2 | 4) {
            return Err(IsobmffError::BadLengthSize(self.nal_length_size));
        }
        let mut groups: Vec<(u8, Vec<&[u8]>)> = Vec::new();
        for (index, ps) in self.parameter_sets.iter().enumerate() {
            if ps.len() < 2 {
                return Err(IsobmffError::InvalidParameterSet { index });
            }
            let t = hevc_nal_type(ps[0]);
            match groups.iter_mut().find(|(gt, _)| *gt == t) {
                Some((_, v)) => v.push(ps),
                None => groups.push((t, vec![ps])),
            }
        }
        let mut out = Vec::with_capacity(23 + self.parameter_sets.iter().map(|p| p.len() + 5).sum::<usize>());
        out.extend_from_slice(&self.general);
        out.push((self.temporal_bits & 0xfc) | (self.nal_length_size - 1));
        out.push(groups.len() as u8);
        for (t, sets) in groups {
            out.push(0x80 | t);
            put_u16(&mut out, sets.len() as u16);
            for ps in sets {
                put_u16(&mut out, ps.len() as u16);
                out.extend_from_slice(ps);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_grouped_sets() {
        let cfg = HevcConfig::new(4, vec![vec![0x40, 0x01, 0xAA], vec![0x42, 0x01, 0xBB, 0xBB], vec![0x44, 0x01]]);
        let bytes = cfg.to_bytes().unwrap();
        assert_eq!(bytes[21] & 0x03, 3);
        assert_eq!(bytes[22], 3);
        assert_eq!(HevcConfig::parse(&bytes).unwrap(), cfg);
    }

    #[test]
    fn same_type_sets_share_an_array() {
        let cfg = HevcConfig::new(2, vec![vec![0x44, 0x01, 1], vec![0x44, 0x01, 2]]);
        let bytes = cfg.to_bytes().unwrap();
        assert_eq!(bytes[22], 1);
        let back = HevcConfig::parse(&bytes).unwrap();
        assert_eq!(back.nal_length_size, 2);
        assert_eq!(back.parameter_sets.len(), 2);
    }

    #[test]
    fn rejects_length_size_three() {
        let mut bytes = HevcConfig::new(4, vec![]).to_bytes().unwrap();
        bytes[21] = (bytes[21] & 0xfc) | 0x02;
        assert_eq!(HevcConfig::parse(&bytes), Err(IsobmffError::BadLengthSize(3)));
    }

    #[test]
    fn truncated_record() {
        assert!(matches!(HevcConfig::parse(&[1, 2, 3]), Err(IsobmffError::MalformedBox { .. })));
    }
}
