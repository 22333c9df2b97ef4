//! Gateway and monitor age vectors and their evolution under polls and sends.

use crate::error::{Error, Result};
use crate::stochastic::DistributionSpec;

/// `n` sensors sharing one medium with the gateway-to-monitor link.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    sensor_dists: Vec<DistributionSpec>,
    monitor_dist: DistributionSpec,
}

impl SystemModel {
    pub fn new(sensor_dists: Vec<DistributionSpec>, monitor_dist: DistributionSpec) -> Result<Self> {
        if sensor_dists.is_empty() {
            return Err(Error::Model("at least one sensor is required".into()));
        }
        for (i, d) in sensor_dists.iter().enumerate() {
            d.validate_sampling()
                .map_err(|e| Error::Model(format!("sensor {i}: {e}")))?;
        }
        monitor_dist
            .validate_sampling()
            .map_err(|e| Error::Model(format!("monitor: {e}")))?;
        Ok(Self {
            sensor_dists,
            monitor_dist,
        })
    }

    /// `n` sensors with the same transmission-time law.
    pub fn homogeneous(n: usize, sensor: DistributionSpec, monitor: DistributionSpec) -> Result<Self> {
        Self::new(vec![sensor; n], monitor)
    }

    pub fn n(&self) -> usize {
        self.sensor_dists.len()
    }

    pub fn sensor_dists(&self) -> &[DistributionSpec] {
        &self.sensor_dists
    }

    pub fn sensor_dist(&self, i: usize) -> &DistributionSpec {
        &self.sensor_dists[i]
    }

    pub fn monitor_dist(&self) -> &DistributionSpec {
        &self.monitor_dist
    }

    /// True when every sensor has the same law.
    pub fn is_iid(&self) -> bool {
        self.sensor_dists.windows(2).all(|w| w[0] == w[1])
    }

    /// Exact sensor means, in sensor order.
    pub fn sensor_means(&self) -> Vec<f64> {
        self.sensor_dists
            .iter()
            .map(|d| d.mean().expect("validated at construction"))
            .collect()
    }
}

/// What the gateway does at a decision instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Poll { sensor: usize },
    SendToMonitor,
}

/// Clock, age vectors at the gateway and the monitor, and the number of
/// polls since the last send.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeState {
    pub t: f64,
    pub age_gw: Vec<f64>,
    pub age_mon: Vec<f64>,
    pub polls_since_send: usize,
}

impl AgeState {
    /// All ages zero at time zero.
    pub fn new(n: usize) -> Self {
        Self {
            t: 0.0,
            age_gw: vec![0.0; n],
            age_mon: vec![0.0; n],
            polls_since_send: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.age_gw.len()
    }

    /// Sensor `sensor` transmits for `x`. Its gateway age becomes `x`, since
    /// the update is stamped at the poll instant; every other age grows by `x`.
    pub fn apply_poll(&mut self, sensor: usize, x: f64) -> Result<()> {
        if sensor >= self.n() {
            return Err(Error::Precondition(format!(
                "sensor {sensor} out of range for n = {}",
                self.n()
            )));
        }
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::Precondition(format!("poll duration must be > 0, got {x}")));
        }
        self.t += x;
        for a in &mut self.age_gw {
            *a += x;
        }
        for a in &mut self.age_mon {
            *a += x;
        }
        self.age_gw[sensor] = x;
        self.polls_since_send += 1;
        Ok(())
    }

    /// The gateway transmits for `x0`; on completion the monitor takes over
    /// the gateway's ages.
    pub fn apply_send(&mut self, x0: f64) -> Result<()> {
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(Error::Precondition(format!("send duration must be > 0, got {x0}")));
        }
        self.t += x0;
        for a in &mut self.age_gw {
            *a += x0;
        }
        self.age_mon.copy_from_slice(&self.age_gw);
        self.polls_since_send = 0;
        Ok(())
    }

    pub fn apply(&mut self, decision: Decision, duration: f64) -> Result<()> {
        match decision {
            Decision::Poll { sensor } => self.apply_poll(sensor, duration),
            Decision::SendToMonitor => self.apply_send(duration),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(gw: &[f64], mon: &[f64]) -> AgeState {
        AgeState {
            t: 0.0,
            age_gw: gw.to_vec(),
            age_mon: mon.to_vec(),
            polls_since_send: 0,
        }
    }

    #[test]
    fn poll_resets_only_the_polled_sensor() {
        let mut s = state(&[2.0, 4.0], &[5.0, 5.0]);
        s.apply_poll(1, 1.5).unwrap();
        assert_eq!(s.age_gw, vec![3.5, 1.5]);
        assert_eq!(s.age_mon, vec![6.5, 6.5]);
        assert_eq!(s.polls_since_send, 1);
        assert_eq!(s.t, 1.5);
    }

    #[test]
    fn first_poll_from_zero() {
        let mut s = AgeState::new(2);
        s.apply_poll(0, 3.0).unwrap();
        assert_eq!(s.age_gw, vec![3.0, 3.0]);
    }

    #[test]
    fn monitor_ages_only_grow_during_polls() {
        let mut s = state(&[1.0, 1.0], &[10.0, 10.0]);
        s.apply_poll(0, 2.0).unwrap();
        assert_eq!(s.age_mon, vec![12.0, 12.0]);
    }

    #[test]
    fn send_copies_gateway_ages() {
        let mut s = state(&[1.0, 2.0], &[5.0, 6.0]);
        s.polls_since_send = 2;
        s.apply_send(1.0).unwrap();
        assert_eq!(s.age_gw, vec![2.0, 3.0]);
        assert_eq!(s.age_mon, vec![2.0, 3.0]);
        assert_eq!(s.polls_since_send, 0);
    }

    #[test]
    fn rejects_bad_durations_and_indices() {
        let mut s = AgeState::new(2);
        assert!(s.apply_send(0.0).is_err());
        assert!(s.apply_poll(0, -1.0).is_err());
        assert!(s.apply_poll(0, f64::NAN).is_err());
        assert!(s.apply_poll(2, 1.0).is_err());
        assert_eq!(s, AgeState::new(2));
    }

    #[test]
    fn model_validation() {
        assert!(SystemModel::new(vec![], DistributionSpec::exponential(1.0)).is_err());
        assert!(SystemModel::homogeneous(
            3,
            DistributionSpec::exponential(1.0),
            DistributionSpec::truncated_gaussian(-10.0, 1.0)
        )
        .is_err());
        let m = SystemModel::new(
            vec![DistributionSpec::exponential(1.0), DistributionSpec::exponential(3.0)],
            DistributionSpec::deterministic(1.0),
        )
        .unwrap();
        assert!(!m.is_iid());
        assert_eq!(m.sensor_means(), vec![1.0, 3.0]);
    }
}
