use serde::{Deserialize, Serialize};

/// `max(1 - 0.1 floor(tau / 50), 0)`.
pub fn stepped_epsilon(tau: u64) -> f64 {
    EpsilonSchedule::default().epsilon(tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EpsilonSchedule {
    /// `max(start - decrement floor(tau / every), floor)`.
    Stepped {
        start: f64,
        decrement: f64,
        every: u64,
        floor: f64,
    },
    Constant {
        epsilon: f64,
    },
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule::Stepped { start: 1.0, decrement: 0.1, every: 50, floor: 0.0 }
    }
}

impl EpsilonSchedule {
    pub fn epsilon(&self, tau: u64) -> f64 {
        match *self {
            EpsilonSchedule::Stepped { start, decrement, every, floor } => {
                // Integer step count keeps the decrements exact at 0.1 multiples.
                let steps = (tau / every.max(1)) as f64;
                let e = (start * 10.0 - decrement * 10.0 * steps) / 10.0;
                e.max(floor).clamp(0.0, 1.0)
            }
            EpsilonSchedule::Constant { epsilon } => epsilon.clamp(0.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            EpsilonSchedule::Stepped { start, decrement, every, floor } => {
                (0.0..=1.0).contains(&start) && decrement >= 0.0 && every >= 1 && (0.0..=1.0).contains(&floor)
            }
            EpsilonSchedule::Constant { epsilon } => (0.0..=1.0).contains(&epsilon),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid exploration schedule {self:?}"))
        }
    }
}
