use serde::{Deserialize, Serialize};

use crate::prefs::MarketShape;
use crate::{Doctor, Error, Hospital, Result};

/// One-to-one partial matching between doctors and hospitals.
///
/// Serialized as `{"num_doctors", "num_hospitals", "pairs": [[d, h], ...]}`
/// with 1-based labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "MatchingDoc", into = "MatchingDoc")]
pub struct Matching {
    doctor_partner: Vec<Option<Hospital>>,
    hospital_partner: Vec<Option<Doctor>>,
}

#[derive(Serialize, Deserialize)]
struct MatchingDoc {
    num_doctors: u32,
    num_hospitals: u32,
    pairs: Vec<(Doctor, Hospital)>,
}

impl TryFrom<MatchingDoc> for Matching {
    type Error = Error;

    fn try_from(doc: MatchingDoc) -> Result<Self> {
        Matching::from_pairs(
            MarketShape {
                num_doctors: doc.num_doctors,
                num_hospitals: doc.num_hospitals,
            },
            doc.pairs,
        )
    }
}

impl From<Matching> for MatchingDoc {
    fn from(m: Matching) -> Self {
        MatchingDoc {
            num_doctors: m.doctor_partner.len() as u32,
            num_hospitals: m.hospital_partner.len() as u32,
            pairs: m.pairs().collect(),
        }
    }
}

impl Matching {
    pub fn empty(shape: MarketShape) -> Self {
        Matching {
            doctor_partner: vec![None; shape.num_doctors as usize],
            hospital_partner: vec![None; shape.num_hospitals as usize],
        }
    }

    pub fn from_pairs(
        shape: MarketShape,
        pairs: impl IntoIterator<Item = (Doctor, Hospital)>,
    ) -> Result<Self> {
        let mut m = Matching::empty(shape);
        for (d, h) in pairs {
            if d.0 >= shape.num_doctors || h.0 >= shape.num_hospitals {
                return Err(Error::InvalidMatching(format!("pair ({d}, {h}) out of range")));
            }
            if m.doctor_partner[d.index()].is_some() || m.hospital_partner[h.index()].is_some() {
                return Err(Error::ConflictingPair(d, h));
            }
            m.doctor_partner[d.index()] = Some(h);
            m.hospital_partner[h.index()] = Some(d);
        }
        Ok(m)
    }

    /// Builds a matching from the hospital side; `partners[h]` is `μ(h)`.
    pub fn from_hospital_partners(
        num_doctors: u32,
        partners: &[Option<Doctor>],
    ) -> Result<Self> {
        let shape = MarketShape {
            num_doctors,
            num_hospitals: partners.len() as u32,
        };
        Matching::from_pairs(
            shape,
            partners
                .iter()
                .enumerate()
                .filter_map(|(h, d)| d.map(|d| (d, Hospital(h as u32)))),
        )
    }

    pub fn shape(&self) -> MarketShape {
        MarketShape {
            num_doctors: self.doctor_partner.len() as u32,
            num_hospitals: self.hospital_partner.len() as u32,
        }
    }

    pub fn partner_of_doctor(&self, d: Doctor) -> Option<Hospital> {
        self.doctor_partner[d.index()]
    }

    pub fn partner_of_hospital(&self, h: Hospital) -> Option<Doctor> {
        self.hospital_partner[h.index()]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (Doctor, Hospital)> + '_ {
        self.doctor_partner
            .iter()
            .enumerate()
            .filter_map(|(d, h)| h.map(|h| (Doctor(d as u32), h)))
    }

    pub fn len(&self) -> usize {
        self.pairs().count()
    }

    pub fn is_empty(&self) -> bool {
        self.doctor_partner.iter().all(Option::is_none)
    }

    pub fn unmatched_doctors(&self) -> Vec<Doctor> {
        self.doctor_partner
            .iter()
            .enumerate()
            .filter(|(_, h)| h.is_none())
            .map(|(d, _)| Doctor(d as u32))
            .collect()
    }

    pub fn unmatched_hospitals(&self) -> Vec<Hospital> {
        self.hospital_partner
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_none())
            .map(|(h, _)| Hospital(h as u32))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_double_assignment() {
        let shape = MarketShape::new(2, 2).unwrap();
        let err = Matching::from_pairs(
            shape,
            [(Doctor(0), Hospital(0)), (Doctor(1), Hospital(0))],
        );
        assert!(matches!(err, Err(Error::ConflictingPair(..))));
        assert!(Matching::from_pairs(shape, [(Doctor(2), Hospital(0))]).is_err());
    }

    #[test]
    fn json_is_one_based() {
        let shape = MarketShape::new(3, 2).unwrap();
        let m = Matching::from_pairs(shape, [(Doctor(0), Hospital(1)), (Doctor(2), Hospital(0))])
            .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"num_doctors":3,"num_hospitals":2,"pairs":[[1,2],[3,1]]}"#);
        let back: Matching = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.unmatched_doctors(), vec![Doctor(1)]);
        assert!(serde_json::from_str::<Matching>(
            r#"{"num_doctors":1,"num_hospitals":1,"pairs":[[0,1]]}"#
        )
        .is_err());
    }
}
