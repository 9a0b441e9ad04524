//! Frame-level planning of CoAP(S) transactions over 6LoWPAN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mac::{GtsDirection, PhyTiming};
use crate::powermodel::CalibrationProfile;
use crate::time::Ns;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StackOverheads {
    pub mac_header_bytes: usize,
    pub sixlowpan_iphc_udp_bytes: usize,
    pub sixlowpan_frag1_bytes: usize,
    pub sixlowpan_fragn_bytes: usize,
    pub coap_base_bytes: usize,
    pub coap_block_option_bytes: usize,
    pub dtls_record_bytes: usize,
    pub dtls_cycles_per_byte: u64,
    pub dtls_cycles_per_record: u64,
    pub block_size: usize,
}

impl Default for StackOverheads {
    fn default() -> Self {
        StackOverheads::from_profile(&CalibrationProfile::default())
    }
}

impl StackOverheads {
    pub fn from_profile(profile: &CalibrationProfile) -> Self {
        StackOverheads {
            mac_header_bytes: 11,
            sixlowpan_iphc_udp_bytes: 11,
            sixlowpan_frag1_bytes: 4,
            sixlowpan_fragn_bytes: 5,
            coap_base_bytes: 12,
            coap_block_option_bytes: 3,
            // record header 13, explicit nonce 8, CCM tag 16
            dtls_record_bytes: 37,
            dtls_cycles_per_byte: profile.workload_cycles.dtls_per_byte,
            dtls_cycles_per_record: profile.workload_cycles.dtls_per_record,
            block_size: 64,
        }
    }

    /// Largest CoAP payload carried in one unfragmented frame.
    pub fn single_frame_capacity(&self, secure: bool) -> usize {
        let used = self.mac_header_bytes
            + self.sixlowpan_iphc_udp_bytes
            + self.coap_base_bytes
            + if secure { self.dtls_record_bytes } else { 0 };
        PhyTiming::MAX_PSDU.saturating_sub(used)
    }

    pub fn validate(&self) -> Result<()> {
        let plain = self.single_frame_capacity(false);
        if !(64..128).contains(&plain) {
            return Err(Error::Config(format!(
                "plain single-frame capacity {plain} outside [64, 128)"
            )));
        }
        let secure = self.single_frame_capacity(true);
        if secure >= 64 {
            return Err(Error::Config(format!(
                "secure single-frame capacity {secure} must be below 64"
            )));
        }
        if self.block_size == 0 {
            return Err(Error::Config("block_size must be positive".into()));
        }
        let room = PhyTiming::MAX_PSDU - self.mac_header_bytes;
        if room <= self.sixlowpan_fragn_bytes + 8 {
            return Err(Error::Config("no room for fragment payload".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_gts(self) -> GtsDirection {
        match self {
            Direction::Up => GtsDirection::Uplink,
            Direction::Down => GtsDirection::Downlink,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameLayer {
    Whole,
    Frag1,
    FragN,
}

/// One link-layer frame; `content_bytes` is the part of the compressed
/// datagram it carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub direction: Direction,
    pub psdu_bytes: usize,
    pub layer: FrameLayer,
    pub content_bytes: usize,
}

/// Splits a compressed datagram into 802.15.4 frames. Non-final fragment
/// payloads are multiples of 8 bytes.
pub fn fragment_datagram(len: usize, direction: Direction, ov: &StackOverheads) -> Vec<Frame> {
    let room = PhyTiming::MAX_PSDU - ov.mac_header_bytes;
    if len <= room {
        return vec![Frame {
            direction,
            psdu_bytes: ov.mac_header_bytes + len,
            layer: FrameLayer::Whole,
            content_bytes: len,
        }];
    }
    let mut frames = Vec::new();
    let mut left = len;
    let mut first = true;
    while left > 0 {
        let (hdr, layer) = if first {
            (ov.sixlowpan_frag1_bytes, FrameLayer::Frag1)
        } else {
            (ov.sixlowpan_fragn_bytes, FrameLayer::FragN)
        };
        let cap = room - hdr;
        let chunk = if left <= cap { left } else { cap / 8 * 8 };
        frames.push(Frame {
            direction,
            psdu_bytes: ov.mac_header_bytes + hdr + chunk,
            layer,
            content_bytes: chunk,
        });
        left -= chunk;
        first = false;
    }
    frames
}

/// Frames for one CoAP datagram carrying `payload_bytes` without block option.
pub fn fragment(payload_bytes: usize, secure: bool, ov: &StackOverheads) -> Vec<Frame> {
    fragment_datagram(datagram_len(payload_bytes, false, secure, ov), Direction::Up, ov)
}

fn datagram_len(payload: usize, block_opt: bool, secure: bool, ov: &StackOverheads) -> usize {
    ov.sixlowpan_iphc_udp_bytes
        + ov.coap_base_bytes
        + if block_opt { ov.coap_block_option_bytes } else { 0 }
        + payload
        + if secure { ov.dtls_record_bytes } else { 0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_uppercase().as_str() {
            "GET" => Ok(Method::Get),
            "POST" => Ok(Method::Post),
            _ => Err(Error::UnsupportedMethod(s.to_string())),
        }
    }
}

/// One request/response round trip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockExchange {
    pub uplink: Vec<Frame>,
    pub downlink: Vec<Frame>,
    /// CoAP message bytes before DTLS protection, both directions.
    pub message_bytes: usize,
    pub cpu_extra_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionPlan {
    pub method: Method,
    pub payload_bytes: usize,
    pub secure: bool,
    pub exchanges: Vec<BlockExchange>,
}

impl TransactionPlan {
    pub fn blocks(&self) -> usize {
        self.exchanges.len()
    }

    pub fn frames(&self) -> Vec<Frame> {
        self.exchanges
            .iter()
            .flat_map(|e| e.uplink.iter().chain(e.downlink.iter()).copied())
            .collect()
    }

    pub fn count(&self, dir: Direction) -> usize {
        self.frames().iter().filter(|f| f.direction == dir).count()
    }

    pub fn cpu_extra_cycles(&self) -> u64 {
        self.exchanges.iter().map(|e| e.cpu_extra_cycles).sum()
    }
}

pub fn plan_coap_exchange(
    method: Method,
    payload_bytes: usize,
    secure: bool,
    ov: &StackOverheads,
) -> Result<TransactionPlan> {
    if payload_bytes == 0 {
        return Err(Error::Config("payload must be at least 1 byte".into()));
    }
    let blockwise = payload_bytes > ov.block_size;
    let blocks = if blockwise {
        payload_bytes.div_ceil(ov.block_size)
    } else {
        1
    };
    let mut exchanges = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let chunk = if blockwise {
            (payload_bytes - b * ov.block_size).min(ov.block_size)
        } else {
            payload_bytes
        };
        let (req_payload, resp_payload) = match method {
            Method::Get => (0, chunk),
            Method::Post => (chunk, 0),
        };
        let req = datagram_len(req_payload, blockwise, secure, ov);
        let resp = datagram_len(resp_payload, blockwise, secure, ov);
        let message_bytes =
            req + resp - 2 * ov.sixlowpan_iphc_udp_bytes - if secure { 2 * ov.dtls_record_bytes } else { 0 };
        let cpu_extra_cycles = if secure {
            2 * ov.dtls_cycles_per_record + message_bytes as u64 * ov.dtls_cycles_per_byte
        } else {
            0
        };
        exchanges.push(BlockExchange {
            uplink: fragment_datagram(req, Direction::Up, ov),
            downlink: fragment_datagram(resp, Direction::Down, ov),
            message_bytes,
            cpu_extra_cycles,
        });
    }
    Ok(TransactionPlan {
        method,
        payload_bytes,
        secure,
        exchanges,
    })
}

/// MAC mode for binding frames to channel access.
#[derive(Debug, Clone, PartialEq)]
pub enum MacBinding<'a> {
    IdleListening,
    Idtx,
    /// Owned GTS occurrences (start, direction) in time order; binding
    /// starts with the first slot not before `from`.
    Dsme {
        slots: &'a [(Ns, GtsDirection)],
        from: Ns,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameEvent {
    CsmaUplink {
        psdu: usize,
    },
    /// Unsolicited reception while listening.
    ListenDownlink {
        psdu: usize,
    },
    /// Poll round fetching one pending frame.
    Poll {
        psdu: usize,
    },
    GtsTx {
        psdu: usize,
        slot_start: Ns,
    },
    GtsRx {
        psdu: usize,
        slot_start: Ns,
    },
}

/// Maps a plan's frames onto MAC operations in exchange order.
pub fn bind_to_mac(plan: &TransactionPlan, mode: &MacBinding) -> Result<Vec<FrameEvent>> {
    let mut out = Vec::new();
    let mut cursor = match mode {
        MacBinding::Dsme { slots, from } => slots.partition_point(|s| s.0 < *from),
        _ => 0,
    };
    for ex in &plan.exchanges {
        for f in ex.uplink.iter().chain(ex.downlink.iter()) {
            let ev = match mode {
                MacBinding::IdleListening | MacBinding::Idtx if f.direction == Direction::Up => {
                    FrameEvent::CsmaUplink { psdu: f.psdu_bytes }
                }
                MacBinding::IdleListening => FrameEvent::ListenDownlink { psdu: f.psdu_bytes },
                MacBinding::Idtx => FrameEvent::Poll { psdu: f.psdu_bytes },
                MacBinding::Dsme { slots, .. } => {
                    let want = f.direction.as_gts();
                    let idx = slots[cursor..]
                        .iter()
                        .position(|s| s.1 == want)
                        .map(|i| i + cursor)
                        .ok_or_else(|| {
                            Error::Capacity(format!("no {want:?} GTS left for frame of {} B", f.psdu_bytes))
                        })?;
                    cursor = idx + 1;
                    match want {
                        GtsDirection::Uplink => FrameEvent::GtsTx {
                            psdu: f.psdu_bytes,
                            slot_start: slots[idx].0,
                        },
                        GtsDirection::Downlink => FrameEvent::GtsRx {
                            psdu: f.psdu_bytes,
                            slot_start: slots[idx].0,
                        },
                    }
                }
            };
            out.push(ev);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov() -> StackOverheads {
        StackOverheads::default()
    }

    #[test]
    fn defaults_satisfy_thresholds() {
        let o = ov();
        o.validate().unwrap();
        assert_eq!(o.single_frame_capacity(false), 93);
        assert!(o.single_frame_capacity(true) < 64);
    }

    #[test]
    fn fragment_examples() {
        let f = fragment(16, false, &ov());
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].psdu_bytes, 16 + 11 + 11 + 12);
        assert_eq!(fragment(64, false, &ov()).len(), 1);
        assert_eq!(fragment(64, true, &ov()).len(), 2);
        assert_eq!(fragment(0, false, &ov()).len(), 1);
    }

    #[test]
    fn fragments_conserve_bytes() {
        let o = ov();
        for len in 1..1200 {
            let fr = fragment_datagram(len, Direction::Down, &o);
            assert_eq!(fr.iter().map(|f| f.content_bytes).sum::<usize>(), len);
            for (i, f) in fr.iter().enumerate() {
                assert!(f.psdu_bytes <= 127);
                if fr.len() > 1 && i + 1 < fr.len() {
                    assert_eq!(f.content_bytes % 8, 0);
                }
            }
        }
    }

    #[test]
    fn coap_plan_examples() {
        let o = ov();
        let g16 = plan_coap_exchange(Method::Get, 16, false, &o).unwrap();
        assert_eq!((g16.count(Direction::Up), g16.count(Direction::Down)), (1, 1));
        let g128 = plan_coap_exchange(Method::Get, 128, false, &o).unwrap();
        assert_eq!(g128.blocks(), 2);
        assert_eq!((g128.count(Direction::Up), g128.count(Direction::Down)), (2, 2));
        let p64s = plan_coap_exchange(Method::Post, 64, true, &o).unwrap();
        assert_eq!((p64s.count(Direction::Up), p64s.count(Direction::Down)), (2, 1));
        assert!(p64s.cpu_extra_cycles() > 0);
        assert!(matches!(Method::parse("PUT"), Err(Error::UnsupportedMethod(_))));
        assert!(plan_coap_exchange(Method::Get, 0, false, &o).is_err());
    }

    #[test]
    fn secure_dominates_plain() {
        let o = ov();
        for m in [Method::Get, Method::Post] {
            for p in [1, 16, 63, 64, 65, 128, 200, 512] {
                let a = plan_coap_exchange(m, p, false, &o).unwrap();
                let b = plan_coap_exchange(m, p, true, &o).unwrap();
                assert!(b.frames().len() >= a.frames().len());
                assert!(b.cpu_extra_cycles() >= a.cpu_extra_cycles());
                assert_eq!(a.blocks(), p.div_ceil(64));
            }
        }
    }

    #[test]
    fn get_post_mirror_single_block() {
        let o = ov();
        for p in 1..=64 {
            let g = plan_coap_exchange(Method::Get, p, false, &o).unwrap();
            let q = plan_coap_exchange(Method::Post, p, false, &o).unwrap();
            assert_eq!(g.count(Direction::Up), q.count(Direction::Down));
            assert_eq!(g.count(Direction::Down), q.count(Direction::Up));
        }
    }

    #[test]
    fn binding_examples() {
        let o = ov();
        let g16 = plan_coap_exchange(Method::Get, 16, false, &o).unwrap();
        let ev = bind_to_mac(&g16, &MacBinding::Idtx).unwrap();
        assert!(matches!(
            ev[..],
            [FrameEvent::CsmaUplink { .. }, FrameEvent::Poll { .. }]
        ));

        let slots: Vec<(Ns, GtsDirection)> = (0..4)
            .map(|i| {
                let d = if i % 2 == 0 {
                    GtsDirection::Uplink
                } else {
                    GtsDirection::Downlink
                };
                (Ns::from_ms(10 * i), d)
            })
            .collect();
        let ev = bind_to_mac(
            &g16,
            &MacBinding::Dsme {
                slots: &slots,
                from: Ns::from_ms(1),
            },
        )
        .unwrap();
        assert_eq!(
            ev,
            vec![
                FrameEvent::GtsTx {
                    psdu: 34,
                    slot_start: Ns::from_ms(20)
                },
                FrameEvent::GtsRx {
                    psdu: 50,
                    slot_start: Ns::from_ms(30)
                },
            ]
        );
        let big = plan_coap_exchange(Method::Get, 128, false, &o).unwrap();
        let r = bind_to_mac(
            &big,
            &MacBinding::Dsme {
                slots: &slots,
                from: Ns::from_ms(1),
            },
        );
        assert!(matches!(r, Err(Error::Capacity(_))));

        let two_down = TransactionPlan {
            exchanges: vec![BlockExchange {
                uplink: fragment_datagram(30, Direction::Up, &o),
                downlink: fragment_datagram(200, Direction::Down, &o),
                message_bytes: 0,
                cpu_extra_cycles: 0,
            }],
            ..g16
        };
        let ev = bind_to_mac(&two_down, &MacBinding::Idtx).unwrap();
        assert_eq!(ev.iter().filter(|e| matches!(e, FrameEvent::Poll { .. })).count(), 2);
    }
}
