//! Flat little-endian encoding of replay payloads.
//!
//! Every payload starts with a 2-byte schema tag. Layouts after the tag:
//!
//! ```text
//! Transition  u32 obs_dim | obs | action | f64 reward | f64 discount
//!             | u32 n_actual | next obs
//! Sequence    u32 L | u32 obs_dim | u32 state_dim | u32 burn_in
//!             | u8 flags (bit 0 episode start, bit 1 ends episode)
//!             | (L+1) obs | L actions | L rewards | L log-probs
//!             | L u8 mask | start state
//! Episode     u32 T | u32 obs_dim | u32 extras_dim | u8 truncated
//!             | T obs | final obs | T actions | T rewards | T extras
//! action      u8 kind; kind 0: u32 index; kind 1: u32 len | len f64
//! ```
//!
//! Observations and states are `dim` consecutive f64 values.

use super::{Episode, SequenceSlice, Transition};
use crate::error::{Error, Result};
use crate::interfaces::Action;

pub const TRANSITION_TAG: u16 = 0x0001;
pub const SEQUENCE_TAG: u16 = 0x0002;
pub const EPISODE_TAG: u16 = 0x0003;

pub trait Payload: Sized {
    const TAG: u16;
    fn encode(&self) -> Vec<u8>;
    fn decode(bytes: &[u8]) -> Result<Self>;
}

/// A decoded payload of any known schema.
#[derive(Clone, Debug, PartialEq)]
pub enum PayloadKind {
    Transition(Transition),
    Sequence(SequenceSlice),
    Episode(Episode),
}

pub fn decode_any(bytes: &[u8]) -> Result<PayloadKind> {
    let mut r = Reader::new(bytes);
    Ok(match r.u16()? {
        TRANSITION_TAG => PayloadKind::Transition(Transition::decode(bytes)?),
        SEQUENCE_TAG => PayloadKind::Sequence(SequenceSlice::decode(bytes)?),
        EPISODE_TAG => PayloadKind::Episode(Episode::decode(bytes)?),
        other => return Err(Error::Corrupt(format!("unknown schema tag {other:#06x}"))),
    })
}

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new(tag: u16) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.u16(tag);
        w
    }

    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub(crate) fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.f64(*v);
        }
    }

    fn action(&mut self, action: &Action) {
        match action {
            Action::Discrete(i) => {
                self.u8(0);
                self.u32(*i as u32);
            }
            Action::Continuous(a) => {
                self.u8(1);
                self.u32(a.len() as u32);
                self.f64s(a);
            }
        }
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt("payload truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if (self.bytes.len() - self.pos) / 8 < n {
            return Err(Error::Corrupt("payload truncated".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn action(&mut self) -> Result<Action> {
        match self.u8()? {
            0 => Ok(Action::Discrete(self.u32()? as usize)),
            1 => {
                let n = self.u32()? as usize;
                Ok(Action::Continuous(self.f64s(n)?))
            }
            k => Err(Error::Corrupt(format!("unknown action kind {k}"))),
        }
    }

    fn tag(&mut self, expected: u16) -> Result<()> {
        let found = self.u16()?;
        if found != expected {
            return Err(Error::Schema { expected, found });
        }
        Ok(())
    }

    pub(crate) fn done(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

impl Payload for Transition {
    const TAG: u16 = TRANSITION_TAG;

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(Self::TAG);
        w.u32(self.observation.len() as u32);
        w.f64s(&self.observation);
        w.action(&self.action);
        w.f64(self.reward);
        w.f64(self.discount);
        w.u32(self.n_actual);
        w.f64s(&self.next_observation);
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.tag(Self::TAG)?;
        let dim = r.u32()? as usize;
        let observation = r.f64s(dim)?;
        let action = r.action()?;
        let reward = r.f64()?;
        let discount = r.f64()?;
        let n_actual = r.u32()?;
        let next_observation = r.f64s(dim)?;
        r.done()?;
        Ok(Self { observation, action, reward, discount, next_observation, n_actual })
    }
}

impl Payload for SequenceSlice {
    const TAG: u16 = SEQUENCE_TAG;

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(Self::TAG);
        let obs_dim = self.observations.first().map_or(0, Vec::len);
        w.u32(self.len() as u32);
        w.u32(obs_dim as u32);
        w.u32(self.start_recurrent_state.len() as u32);
        w.u32(self.burn_in_length);
        w.u8(self.is_episode_start as u8 | (self.ends_episode as u8) << 1);
        for o in &self.observations {
            w.f64s(o);
        }
        for a in &self.actions {
            w.action(a);
        }
        w.f64s(&self.rewards);
        w.f64s(&self.behavior_log_probs);
        for m in &self.mask {
            w.u8(*m as u8);
        }
        w.f64s(&self.start_recurrent_state);
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.tag(Self::TAG)?;
        let len = r.u32()? as usize;
        let obs_dim = r.u32()? as usize;
        let state_dim = r.u32()? as usize;
        let burn_in_length = r.u32()?;
        let flags = r.u8()?;
        let observations = (0..=len).map(|_| r.f64s(obs_dim)).collect::<Result<Vec<_>>>()?;
        let actions = (0..len).map(|_| r.action()).collect::<Result<Vec<_>>>()?;
        let rewards = r.f64s(len)?;
        let behavior_log_probs = r.f64s(len)?;
        let mask = (0..len).map(|_| r.u8().map(|m| m != 0)).collect::<Result<Vec<_>>>()?;
        let start_recurrent_state = r.f64s(state_dim)?;
        r.done()?;
        Ok(Self {
            observations,
            actions,
            rewards,
            behavior_log_probs,
            mask,
            start_recurrent_state,
            burn_in_length,
            is_episode_start: flags & 1 != 0,
            ends_episode: flags & 2 != 0,
        })
    }
}

impl Payload for Episode {
    const TAG: u16 = EPISODE_TAG;

    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(Self::TAG);
        let extras_dim = self.extras.first().map_or(0, Vec::len);
        w.u32(self.len() as u32);
        w.u32(self.final_observation.len() as u32);
        w.u32(extras_dim as u32);
        w.u8(self.truncated as u8);
        for o in &self.observations {
            w.f64s(o);
        }
        w.f64s(&self.final_observation);
        for a in &self.actions {
            w.action(a);
        }
        w.f64s(&self.rewards);
        for e in &self.extras {
            w.f64s(e);
        }
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.tag(Self::TAG)?;
        let len = r.u32()? as usize;
        let obs_dim = r.u32()? as usize;
        let extras_dim = r.u32()? as usize;
        let truncated = r.u8()? != 0;
        let observations = (0..len).map(|_| r.f64s(obs_dim)).collect::<Result<Vec<_>>>()?;
        let final_observation = r.f64s(obs_dim)?;
        let actions = (0..len).map(|_| r.action()).collect::<Result<Vec<_>>>()?;
        let rewards = r.f64s(len)?;
        let extras = if extras_dim == 0 {
            Vec::new()
        } else {
            (0..len).map(|_| r.f64s(extras_dim)).collect::<Result<Vec<_>>>()?
        };
        r.done()?;
        Ok(Self { observations, actions, rewards, final_observation, extras, truncated })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transition() -> Transition {
        Transition {
            observation: vec![1.0, -2.5],
            action: Action::Continuous(vec![0.25]),
            reward: 5.23,
            discount: 0.729,
            next_observation: vec![3.0, 4.0],
            n_actual: 3,
        }
    }

    #[test]
    fn transition_round_trip_and_layout() {
        let t = transition();
        let bytes = t.encode();
        assert_eq!(&bytes[..2], &[0x01, 0x00]);
        assert_eq!(u32::from_le_bytes(bytes[2..6].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[6..14].try_into().unwrap()), 1.0);
        assert_eq!(Transition::decode(&bytes).unwrap(), t);
    }

    #[test]
    fn sequence_round_trip() {
        let s = SequenceSlice {
            observations: vec![vec![0.0], vec![1.0], vec![0.0]],
            actions: vec![Action::Discrete(1), Action::Discrete(0)],
            rewards: vec![1.0, 0.0],
            behavior_log_probs: vec![-0.1, 0.0],
            mask: vec![true, false],
            start_recurrent_state: vec![0.5, 0.25, 0.0],
            burn_in_length: 1,
            is_episode_start: true,
            ends_episode: true,
        };
        assert_eq!(SequenceSlice::decode(&s.encode()).unwrap(), s);
    }

    #[test]
    fn episode_round_trip_with_extras() {
        let e = Episode {
            observations: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            actions: vec![Action::Discrete(0), Action::Discrete(1)],
            rewards: vec![0.0, 1.0],
            final_observation: vec![0.0, 0.0],
            extras: vec![vec![0.5, 0.5], vec![0.1, 0.9]],
            truncated: false,
        };
        assert_eq!(Episode::decode(&e.encode()).unwrap(), e);
        assert_eq!(decode_any(&e.encode()).unwrap(), PayloadKind::Episode(e));
    }

    #[test]
    fn wrong_tag_names_expected_schema() {
        let bytes = transition().encode();
        match Episode::decode(&bytes) {
            Err(Error::Schema { expected, found }) => {
                assert_eq!(expected, EPISODE_TAG);
                assert_eq!(found, TRANSITION_TAG);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let bytes = transition().encode();
        assert!(matches!(Transition::decode(&bytes[..bytes.len() - 1]), Err(Error::Corrupt(_))));
        assert!(decode_any(&[0x09, 0x00]).is_err());
    }
}
