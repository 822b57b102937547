use super::WireError;

pub const DEFAULT_WINDOW: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowEvent {
    /// Sender put one DATA frame on the wire.
    DataSent,
    /// Sender processed a CREDIT frame.
    CreditReceived(u32),
    /// Receiver issued a CREDIT frame.
    CreditGranted(u32),
    /// Receiver accepted one DATA frame.
    DataReceived,
}

/// Credit bookkeeping for one side of one connection.
///
/// On the sender, `credits_remaining` is how many DATA frames may still be
/// sent. On the receiver it is granted-minus-consumed, which never exceeds
/// the window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowState {
    pub credits_remaining: i64,
    pub window: u32,
    pub data_sent: u64,
    pub data_received: u64,
    pub credits_granted: u64,
    pub credits_received: u64,
}

impl FlowState {
    pub fn sender(initial_credits: u32, window: u32) -> Self {
        Self {
            credits_remaining: initial_credits as i64,
            window: window.max(1),
            data_sent: 0,
            data_received: 0,
            credits_granted: 0,
            credits_received: initial_credits as u64,
        }
    }

    /// Receiver books after the initial grant of a full window.
    pub fn receiver(window: u32) -> Self {
        let window = window.max(1);
        Self {
            credits_remaining: window as i64,
            window,
            data_sent: 0,
            data_received: 0,
            credits_granted: window as u64,
            credits_received: 0,
        }
    }

    pub fn can_send(&self) -> bool {
        self.credits_remaining >= 1
    }
}

pub fn credit_update(mut state: FlowState, event: FlowEvent) -> Result<FlowState, WireError> {
    match event {
        FlowEvent::DataSent => {
            if state.credits_remaining < 1 {
                return Err(WireError::NoCredit);
            }
            state.credits_remaining -= 1;
            state.data_sent += 1;
        }
        FlowEvent::CreditReceived(n) => {
            state.credits_remaining += n as i64;
            state.credits_received += n as u64;
        }
        FlowEvent::CreditGranted(n) => {
            if state.credits_remaining + n as i64 > state.window as i64 {
                return Err(WireError::Protocol(format!(
                    "grant of {n} would exceed window {}",
                    state.window
                )));
            }
            state.credits_remaining += n as i64;
            state.credits_granted += n as u64;
        }
        FlowEvent::DataReceived => {
            if state.credits_remaining < 1 {
                return Err(WireError::CreditViolation);
            }
            state.credits_remaining -= 1;
            state.data_received += 1;
        }
    }
    Ok(state)
}

/// Re-grants credit in half-window batches as the receiver's queue drains.
#[derive(Debug, Clone)]
pub struct GrantPolicy {
    batch: u32,
    drained: u32,
}

impl GrantPolicy {
    pub fn new(window: u32) -> Self {
        Self {
            batch: (window / 2).max(1),
            drained: 0,
        }
    }

    pub fn batch(&self) -> u32 {
        self.batch
    }

    /// Records one sample leaving the queue; returns a grant once a full
    /// batch has drained.
    pub fn on_drain(&mut self) -> Option<u32> {
        self.drained += 1;
        if self.drained >= self.batch {
            Some(std::mem::take(&mut self.drained))
        } else {
            None
        }
    }
}
