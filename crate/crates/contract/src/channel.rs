//! The zone's channel plan.

use bdsas_core::codec::{CodecError, Decode, Encode, Reader};
use bdsas_core::{AvailabilityReason, FrequencyRange};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelDescriptor {
    pub index: u16,
    pub low_mhz: f64,
    pub high_mhz: f64,
    pub available: bool,
    pub reason: AvailabilityReason,
}

bdsas_core::impl_codec_struct!(ChannelDescriptor {
    index,
    low_mhz,
    high_mhz,
    available,
    reason
});

#[derive(Clone, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct ChannelTable {
    pub channels: Vec<ChannelDescriptor>,
}

impl Encode for ChannelTable {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.channels.encode_into(out);
    }
}

impl Decode for ChannelTable {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(ChannelTable { channels: Vec::decode_from(r)? })
    }
}

impl ChannelTable {
    /// The CBRS band plan: 15 channels of 10 MHz covering 3550 to 3700 MHz,
    /// all initially open.
    pub fn cbrs_default() -> Self {
        ChannelTable {
            channels: (0..15)
                .map(|i| ChannelDescriptor {
                    index: i,
                    low_mhz: 3550.0 + 10.0 * i as f64,
                    high_mhz: 3560.0 + 10.0 * i as f64,
                    available: true,
                    reason: AvailabilityReason::Open,
                })
                .collect(),
        }
    }

    /// Uniform plan for small test scenarios.
    pub fn uniform(count: u16) -> Self {
        ChannelTable {
            channels: (0..count)
                .map(|i| ChannelDescriptor {
                    index: i,
                    low_mhz: 3550.0 + 10.0 * i as f64,
                    high_mhz: 3560.0 + 10.0 * i as f64,
                    available: true,
                    reason: AvailabilityReason::Open,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> u16 {
        self.channels.len() as u16
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn get(&self, index: u16) -> Option<&ChannelDescriptor> {
        self.channels.get(index as usize)
    }

    /// Channel indices fully contained in the requested frequency window.
    pub fn indices_within(&self, range: &FrequencyRange) -> Vec<u16> {
        self.channels
            .iter()
            .filter(|c| c.low_mhz >= range.low_mhz && c.high_mhz <= range.high_mhz)
            .map(|c| c.index)
            .collect()
    }

    pub fn set_availability(&mut self, index: u16, available: bool, reason: AvailabilityReason) {
        if let Some(c) = self.channels.get_mut(index as usize) {
            c.available = available;
            c.reason = reason;
        }
    }
}
