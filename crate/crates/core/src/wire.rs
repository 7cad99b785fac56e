//! MP_PRIO TCP option codec.
//!
//! Layout follows RFC 6824 section 3.3.8:
//!
//! ```text
//!  0               1               2               3
//! +---------------+---------------+-------+-----+-+--------------+
//! |     Kind      |     Length    |Subtype|(rsv)|B| AddrID (opt) |
//! +---------------+---------------+-------+-----+-+--------------+
//! ```
//!
//! The three reserved bits are written as zero and ignored when reading.

use thiserror::Error;

/// TCP option kind assigned to MPTCP.
pub const MPTCP_OPTION_KIND: u8 = 30;
/// MPTCP option subtype of MP_PRIO.
pub const MP_PRIO_SUBTYPE: u8 = 0x5;

const BACKUP_BIT: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MpPrioOption {
    pub backup_flag: bool,
    /// Address id of the sub-flow whose priority changes; `None` targets
    /// the sub-flow the option travels on.
    pub addr_id: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("not an MP_PRIO option (kind {kind}, subtype {subtype:?})")]
    NotMpPrio { kind: u8, subtype: Option<u8> },
    #[error("malformed MP_PRIO option: {0}")]
    Malformed(&'static str),
}

impl MpPrioOption {
    pub fn encoded_len(&self) -> usize {
        if self.addr_id.is_some() {
            4
        } else {
            3
        }
    }
}

pub fn encode_mp_prio(opt: &MpPrioOption) -> Vec<u8> {
    let len = opt.encoded_len();
    let mut out = Vec::with_capacity(len);
    out.push(MPTCP_OPTION_KIND);
    out.push(len as u8);
    out.push((MP_PRIO_SUBTYPE << 4) | u8::from(opt.backup_flag));
    if let Some(id) = opt.addr_id {
        out.push(id);
    }
    out
}

/// Decodes exactly one MP_PRIO option; the buffer length must equal the
/// option's length byte.
pub fn decode_mp_prio(bytes: &[u8]) -> Result<MpPrioOption, WireError> {
    let (&kind, rest) = bytes
        .split_first()
        .ok_or(WireError::Malformed("empty buffer"))?;
    if kind != MPTCP_OPTION_KIND {
        return Err(WireError::NotMpPrio { kind, subtype: None });
    }
    let &len = rest.first().ok_or(WireError::Malformed("missing length"))?;
    if len != 3 && len != 4 {
        return Err(WireError::Malformed("length must be 3 or 4"));
    }
    if bytes.len() < usize::from(len) {
        return Err(WireError::Malformed("truncated"));
    }
    if bytes.len() > usize::from(len) {
        return Err(WireError::Malformed("trailing bytes after option"));
    }
    let subtype = bytes[2] >> 4;
    if subtype != MP_PRIO_SUBTYPE {
        return Err(WireError::NotMpPrio { kind, subtype: Some(subtype) });
    }
    Ok(MpPrioOption {
        backup_flag: bytes[2] & BACKUP_BIT != 0,
        addr_id: (len == 4).then(|| bytes[3]),
    })
}
