use crate::lie::{LieGroup, Rotation2, Rotation3};
use crate::{Error, Result};

/// How rotation components are generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// Rotations are flowed as truncated vectors and projected once at the end.
    Euclidean,
    /// Rotations follow geodesics and stay on the group at every step.
    Manifold,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Euclidean => "euclidean",
            Formulation::Manifold => "manifold",
        }
    }
}

impl std::str::FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Formulation::Euclidean),
            "manifold" | "so2" | "so3" => Ok(Formulation::Manifold),
            _ => Err(Error::config(format!(
                "unknown formulation `{s}` (expected euclidean or manifold)"
            ))),
        }
    }
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Segment {
    Vector(usize),
    So2,
    So3,
}

impl Segment {
    /// Width of the segment inside a flattened Euclidean state.
    pub fn euclidean_dim(self) -> usize {
        match self {
            Segment::Vector(n) => n,
            Segment::So2 => Rotation2::REPR,
            Segment::So3 => Rotation3::REPR,
        }
    }

    /// Width of the network input for this segment. Rotations enter the
    /// network truncated in both formulations.
    pub fn input_dim(self, _f: Formulation) -> usize {
        self.euclidean_dim()
    }

    /// Width of the velocity for this segment.
    pub fn velocity_dim(self, f: Formulation) -> usize {
        match (self, f) {
            (Segment::Vector(n), _) => n,
            (_, Formulation::Euclidean) => self.euclidean_dim(),
            (Segment::So2, Formulation::Manifold) => Rotation2::DOF,
            (Segment::So3, Formulation::Manifold) => Rotation3::DOF,
        }
    }
}

/// One component of a state.
#[derive(Clone, Debug, PartialEq)]
pub enum Element {
    Vector(Vec<f64>),
    So2(Rotation2),
    So3(Rotation3),
}

impl Element {
    /// Euclidean embedding: vectors as-is, rotations truncated.
    pub fn euclidean(&self) -> Vec<f64> {
        match self {
            Element::Vector(v) => v.clone(),
            Element::So2(r) => r.truncate(),
            Element::So3(r) => r.truncate(),
        }
    }

    /// Row-major matrix entries for rotations, the vector itself otherwise.
    pub fn entries(&self) -> Vec<f64> {
        match self {
            Element::Vector(v) => v.clone(),
            Element::So2(r) => r.matrix_entries(),
            Element::So3(r) => r.matrix_entries(),
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Element::Vector(v) => v.iter().all(|x| x.is_finite()),
            Element::So2(r) => r.is_valid(),
            Element::So3(r) => r.is_valid(),
        }
    }
}

/// A point of the product space described by a [`Layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct State(pub Vec<Element>);

impl State {
    pub fn elements(&self) -> &[Element] {
        &self.0
    }

    /// Flattened Euclidean embedding.
    pub fn euclidean(&self) -> Vec<f64> {
        self.0.iter().flat_map(Element::euclidean).collect()
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(Element::is_valid)
    }
}

/// Ordered segments of a state, e.g. (position, rotation, gripper) repeated
/// over a prediction horizon.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    segments: Vec<Segment>,
}

impl Layout {
    /// Adjacent vector segments are merged.
    pub fn new(segments: impl IntoIterator<Item = Segment>) -> Self {
        let mut out: Vec<Segment> = Vec::new();
        for s in segments {
            match (out.last_mut(), s) {
                (_, Segment::Vector(0)) => {}
                (Some(Segment::Vector(a)), Segment::Vector(b)) => *a += b,
                _ => out.push(s),
            }
        }
        Self { segments: out }
    }

    pub fn vector(n: usize) -> Self {
        Self::new([Segment::Vector(n)])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn has_rotations(&self) -> bool {
        self.segments.iter().any(|s| !matches!(s, Segment::Vector(_)))
    }

    pub fn euclidean_dim(&self) -> usize {
        self.segments.iter().map(|s| s.euclidean_dim()).sum()
    }

    pub fn input_dim(&self, f: Formulation) -> usize {
        self.segments.iter().map(|s| s.input_dim(f)).sum()
    }

    pub fn velocity_dim(&self, f: Formulation) -> usize {
        self.segments.iter().map(|s| s.velocity_dim(f)).sum()
    }

    /// Checks that `state` has one matching element per segment.
    pub fn check(&self, state: &State) -> Result<()> {
        let ok = state.0.len() == self.segments.len()
            && state.0.iter().zip(&self.segments).all(|(e, s)| match (e, s) {
                (Element::Vector(v), Segment::Vector(n)) => v.len() == *n,
                (Element::So2(_), Segment::So2) | (Element::So3(_), Segment::So3) => true,
                _ => false,
            });
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "state does not match layout {:?}",
                self.segments
            )))
        }
    }

    /// Splits a flat Euclidean vector into vector elements, one per segment.
    pub fn split_flat(&self, flat: &[f64]) -> Result<State> {
        if flat.len() != self.euclidean_dim() {
            return Err(Error::ShapeMismatch {
                op: "layout split",
                expected: vec![self.euclidean_dim()],
                got: vec![flat.len()],
            });
        }
        let mut at = 0;
        let mut out = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            let n = s.euclidean_dim();
            out.push(Element::Vector(flat[at..at + n].to_vec()));
            at += n;
        }
        Ok(State(out))
    }

    /// Gram–Schmidt projection of every rotation segment of a flat vector.
    pub fn project(&self, flat: &[f64]) -> Result<State> {
        let parts = self.split_flat(flat)?;
        let mut out = Vec::with_capacity(parts.0.len());
        for (s, e) in self.segments.iter().zip(parts.0) {
            let Element::Vector(v) = e else { unreachable!() };
            out.push(match s {
                Segment::Vector(_) => Element::Vector(v),
                Segment::So2 => Element::So2(Rotation2::project(&v)?),
                Segment::So3 => Element::So3(Rotation3::project(&v)?),
            });
        }
        Ok(State(out))
    }
}
