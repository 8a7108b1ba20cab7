//! Radial momentum grids for the massive-lepton, neutrino and boson channels.
//!
//! Only |p| and a discrete label are retained. Each mode carries the
//! quadrature weight `4π r² Δr`, which the operator layer absorbs into the
//! mode normalization.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least one shell")]
    EmptyGrid,
    #[error("momentum bound must be positive, got {0}")]
    NonPositiveBound(f64),
    #[error("channel mismatch: grid carries {grid:?} modes, spec describes {spec:?}")]
    ChannelMismatch { grid: Channel, spec: Channel },
    #[error("label {label} is not admissible for channel {channel:?}")]
    BadLabel { channel: Channel, label: i8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Massive,
    Neutrino,
    Boson,
}

impl Channel {
    /// Labels used when the channel is fully resolved: twice the spin for
    /// leptons, the polarization for bosons.
    pub fn full_labels(self) -> &'static [i8] {
        match self {
            Channel::Massive | Channel::Neutrino => &[-1, 1],
            Channel::Boson => &[-1, 0, 1],
        }
    }

    /// Admissible label set for `count` labels (1 collapses to the single label 0).
    pub fn labels(self, count: usize) -> Option<Vec<i8>> {
        match count {
            1 => Some(vec![0]),
            n if n == self.full_labels().len() => Some(self.full_labels().to_vec()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Midpoint,
    Gauss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistics {
    Fermionic,
    Bosonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub channel: Channel,
    pub statistics: Statistics,
    pub mass: f64,
}

impl ChannelSpec {
    pub fn massive_lepton(mass: f64) -> Self {
        Self { channel: Channel::Massive, statistics: Statistics::Fermionic, mass }
    }

    pub fn neutrino() -> Self {
        Self { channel: Channel::Neutrino, statistics: Statistics::Fermionic, mass: 0.0 }
    }

    pub fn boson(m_w: f64) -> Self {
        Self { channel: Channel::Boson, statistics: Statistics::Bosonic, mass: m_w }
    }

    pub fn energy(&self, radius: f64) -> f64 {
        match self.channel {
            Channel::Neutrino => radius,
            _ => (radius * radius + self.mass * self.mass).sqrt(),
        }
    }
}

/// Radial nodes with their one-dimensional quadrature widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub pmax: f64,
    pub scheme: Scheme,
    pub radii: Vec<f64>,
    pub widths: Vec<f64>,
}

impl RadialGrid {
    pub fn shells(&self) -> usize {
        self.radii.len()
    }

    /// Momentum-volume weight of shell `i`.
    pub fn weight(&self, i: usize) -> f64 {
        4.0 * PI * self.radii[i] * self.radii[i] * self.widths[i]
    }

    /// Uniform spacing, if the scheme has one.
    pub fn spacing(&self) -> Option<f64> {
        match self.scheme {
            Scheme::Midpoint => Some(self.pmax / self.radii.len() as f64),
            Scheme::Gauss => None,
        }
    }
}

pub fn build_radial_grid(pmax: f64, shells: usize, scheme: Scheme) -> Result<RadialGrid, GridError> {
    if shells == 0 {
        return Err(GridError::EmptyGrid);
    }
    if !(pmax > 0.0) {
        return Err(GridError::NonPositiveBound(pmax));
    }
    let (radii, widths) = match scheme {
        Scheme::Midpoint => {
            let h = pmax / shells as f64;
            ((0..shells).map(|i| (i as f64 + 0.5) * h).collect(), vec![h; shells])
        }
        Scheme::Gauss => {
            let rule = GaussLegendre::new(NonZeroUsize::new(shells).unwrap());
            let mut pairs: Vec<(f64, f64)> = rule
                .as_node_weight_pairs()
                .iter()
                .map(|&(x, w)| (0.5 * pmax * (x + 1.0), 0.5 * pmax * w))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            pairs.into_iter().unzip()
        }
    };
    Ok(RadialGrid { pmax, scheme, radii, widths })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePoint {
    /// Position in the parent (unrestricted) grid; kernels are indexed by it.
    pub id: usize,
    pub channel: Channel,
    pub shell: usize,
    pub radius: f64,
    /// Twice the spin for leptons, polarization for bosons, 0 when collapsed.
    pub label: i8,
    pub weight: f64,
}

/// Modes of one channel, shell-major and label-minor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeGrid {
    pub channel: Channel,
    pub pmax: f64,
    pub radial: RadialGrid,
    pub labels: Vec<i8>,
    pub points: Vec<ModePoint>,
}

impl ModeGrid {
    pub fn new(channel: Channel, radial: &RadialGrid, labels: &[i8]) -> Result<Self, GridError> {
        let admissible: Vec<i8> = if labels == [0] { vec![0] } else { channel.full_labels().to_vec() };
        for &l in labels {
            if !admissible.contains(&l) {
                return Err(GridError::BadLabel { channel, label: l });
            }
        }
        let mut points = Vec::with_capacity(radial.shells() * labels.len());
        for (shell, &radius) in radial.radii.iter().enumerate() {
            for &label in labels {
                points.push(ModePoint {
                    id: points.len(),
                    channel,
                    shell,
                    radius,
                    label,
                    weight: radial.weight(shell),
                });
            }
        }
        Ok(Self { channel, pmax: radial.pmax, radial: radial.clone(), labels: labels.to_vec(), points })
    }

    /// Builds a channel grid with `label_count` labels (1 or the full set).
    pub fn build(
        channel: Channel,
        pmax: f64,
        shells: usize,
        scheme: Scheme,
        label_count: usize,
    ) -> Result<Self, GridError> {
        let radial = build_radial_grid(pmax, shells, scheme)?;
        let labels = channel
            .labels(label_count)
            .ok_or(GridError::BadLabel { channel, label: label_count as i8 })?;
        Self::new(channel, &radial, &labels)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sub-grid of modes with radius ≥ `sigma`; ids still refer to the parent.
    pub fn above(&self, sigma: f64) -> ModeGrid {
        let mut g = self.clone();
        g.points.retain(|p| p.radius >= sigma);
        g
    }

    /// Number of parent-grid points (ids range over `0..parent_len`).
    pub fn parent_len(&self) -> usize {
        self.radial.shells() * self.labels.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }
}

pub fn dispersion_values(grid: &ModeGrid, spec: &ChannelSpec) -> Result<Vec<f64>, GridError> {
    if grid.channel != spec.channel {
        return Err(GridError::ChannelMismatch { grid: grid.channel, spec: spec.channel });
    }
    Ok(grid.points.iter().map(|p| spec.energy(p.radius)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_example() {
        let g = build_radial_grid(2.0, 4, Scheme::Midpoint).unwrap();
        assert_eq!(g.radii, vec![0.25, 0.75, 1.25, 1.75]);
        for i in 0..4 {
            assert_eq!(g.weight(i), 4.0 * PI * g.radii[i] * g.radii[i] * 0.5);
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(build_radial_grid(1.0, 0, Scheme::Midpoint), Err(GridError::EmptyGrid));
        assert_eq!(build_radial_grid(0.0, 3, Scheme::Gauss), Err(GridError::NonPositiveBound(0.0)));
    }

    #[test]
    fn dispersion_examples() {
        let nu = ModeGrid::build(Channel::Neutrino, 1.5, 2, Scheme::Midpoint, 1).unwrap();
        assert_eq!(dispersion_values(&nu, &ChannelSpec::neutrino()).unwrap(), vec![0.375, 1.125]);
        let e = ModeGrid::build(Channel::Massive, 1.5, 1, Scheme::Midpoint, 1).unwrap();
        assert_eq!(dispersion_values(&e, &ChannelSpec::massive_lepton(1.0)).unwrap(), vec![1.25]);
        let w = ModeGrid::build(Channel::Boson, 2.0, 1, Scheme::Midpoint, 1).unwrap();
        assert_eq!(dispersion_values(&w, &ChannelSpec::boson(80.0)).unwrap(), vec![6401f64.sqrt()]);
        assert!(matches!(
            dispersion_values(&w, &ChannelSpec::neutrino()),
            Err(GridError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn labels_expand_shell_major() {
        let g = ModeGrid::build(Channel::Boson, 1.0, 2, Scheme::Midpoint, 3).unwrap();
        assert_eq!(g.len(), 6);
        let labels: Vec<i8> = g.points.iter().map(|p| p.label).collect();
        assert_eq!(labels, vec![-1, 0, 1, -1, 0, 1]);
        assert!(ModeGrid::build(Channel::Boson, 1.0, 2, Scheme::Midpoint, 2).is_err());
    }

    #[test]
    fn restriction_keeps_parent_ids() {
        let g = ModeGrid::build(Channel::Neutrino, 2.0, 4, Scheme::Midpoint, 2).unwrap();
        let h = g.above(1.0);
        let ids: Vec<usize> = h.points.iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![4, 5, 6, 7]);
        assert_eq!(h.parent_len(), 8);
    }
}
