//! QR/UWB source arbitration with a mean filter over recent outputs so the
//! handover between sources does not jump.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::frames::{circular_mean, Vec3};
use crate::qr::{PoseEstimate, PoseSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub from: PoseSource,
    pub to: PoseSource,
    /// Distance between the two sources at the switch.
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct HybridLocalizer {
    window: VecDeque<PoseEstimate>,
    capacity: usize,
    debounce: usize,
    qr_streak: usize,
    active: Option<PoseSource>,
    last: Option<PoseEstimate>,
    switches: Vec<SwitchEvent>,
}

impl HybridLocalizer {
    /// `window` samples of smoothing; QR takes over after `debounce`
    /// consecutive epochs with a QR fix.
    pub fn new(window: usize, debounce: usize) -> Self {
        let capacity = window.max(1);
        Self {
            window: VecDeque::with_capacity(capacity),
            capacity,
            debounce: debounce.max(1),
            qr_streak: 0,
            active: None,
            last: None,
            switches: Vec::new(),
        }
    }

    pub fn active(&self) -> Option<PoseSource> {
        self.active
    }

    pub fn last(&self) -> Option<&PoseEstimate> {
        self.last.as_ref()
    }

    pub fn switches(&self) -> &[SwitchEvent] {
        &self.switches
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Picks QR when it has been available long enough, else UWB, and
    /// returns the window mean of the selected estimates.
    pub fn arbitrate(&mut self, qr: Option<PoseEstimate>, uwb: PoseEstimate) -> PoseEstimate {
        self.qr_streak = if qr.is_some() { self.qr_streak + 1 } else { 0 };
        let selected = match qr {
            Some(q) if self.qr_streak >= self.debounce => q,
            _ => uwb,
        };
        if let Some(prev) = self.active {
            if prev != selected.source {
                let offset = qr.map(|q| (q.position - uwb.position).norm()).unwrap_or(f64::NAN);
                self.switches.push(SwitchEvent {
                    t: selected.t,
                    from: prev,
                    to: selected.source,
                    offset,
                });
            }
        }
        self.active = Some(selected.source);

        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(selected);
        let n = self.window.len() as f64;
        let position = self.window.iter().map(|e| e.position).sum::<Vec3>() / n;
        let yaw = circular_mean(self.window.iter().map(|e| e.yaw)).unwrap_or(selected.yaw);
        let out = PoseEstimate {
            position,
            yaw,
            source: selected.source,
            t: selected.t,
        };
        self.last = Some(out);
        out
    }
}
