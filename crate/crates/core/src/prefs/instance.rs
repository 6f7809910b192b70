use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{MarketShape, PreferenceOracle};
use crate::{Doctor, Error, Hospital, Rank, Result};

/// A market with every preference list written out.
///
/// Text format (1-based indices):
///
/// ```text
/// D H
/// <D lines: each doctor's hospitals, most preferred first>
/// <H lines: each hospital's doctors, most preferred first>
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    doctor_lists: Vec<Vec<Hospital>>,
    hospital_lists: Vec<Vec<Doctor>>,
}

fn check_permutation(owner: String, list: &[u32], len: usize) -> Result<()> {
    if list.len() != len {
        return Err(Error::MalformedPermutation {
            owner,
            reason: format!("expected {len} entries, found {}", list.len()),
        });
    }
    let mut seen = vec![false; len];
    for &x in list {
        let slot = seen
            .get_mut(x as usize)
            .ok_or_else(|| Error::MalformedPermutation {
                owner: owner.clone(),
                reason: format!("entry {} out of range", x + 1),
            })?;
        if std::mem::replace(slot, true) {
            return Err(Error::MalformedPermutation {
                owner,
                reason: format!("duplicate entry {}", x + 1),
            });
        }
    }
    Ok(())
}

impl Instance {
    pub fn new(doctor_lists: Vec<Vec<Hospital>>, hospital_lists: Vec<Vec<Doctor>>) -> Result<Self> {
        let nd = doctor_lists.len();
        let nh = hospital_lists.len();
        for (i, list) in doctor_lists.iter().enumerate() {
            let raw: Vec<u32> = list.iter().map(|h| h.0).collect();
            check_permutation(Doctor(i as u32).to_string(), &raw, nh)?;
        }
        for (i, list) in hospital_lists.iter().enumerate() {
            let raw: Vec<u32> = list.iter().map(|d| d.0).collect();
            check_permutation(Hospital(i as u32).to_string(), &raw, nd)?;
        }
        Ok(Instance {
            doctor_lists,
            hospital_lists,
        })
    }

    /// Independent uniform permutations for every agent.
    pub fn random<R: Rng + ?Sized>(shape: MarketShape, rng: &mut R) -> Self {
        let doctor_lists = shape
            .doctors()
            .map(|_| {
                let mut l: Vec<Hospital> = shape.hospitals().collect();
                l.shuffle(rng);
                l
            })
            .collect();
        let hospital_lists = shape
            .hospitals()
            .map(|_| {
                let mut l: Vec<Doctor> = shape.doctors().collect();
                l.shuffle(rng);
                l
            })
            .collect();
        Instance {
            doctor_lists,
            hospital_lists,
        }
    }

    pub fn shape(&self) -> MarketShape {
        MarketShape {
            num_doctors: self.doctor_lists.len() as u32,
            num_hospitals: self.hospital_lists.len() as u32,
        }
    }

    pub fn doctor_list(&self, doctor: Doctor) -> &[Hospital] {
        &self.doctor_lists[doctor.index()]
    }

    pub fn hospital_list(&self, hospital: Hospital) -> &[Doctor] {
        &self.hospital_lists[hospital.index()]
    }

    /// `table[h][d] = rank_h(d)`.
    pub fn rank_table(&self) -> Vec<Vec<Rank>> {
        self.hospital_lists
            .iter()
            .map(|list| {
                let mut ranks = vec![0; list.len()];
                for (pos, d) in list.iter().enumerate() {
                    ranks[d.index()] = pos as Rank + 1;
                }
                ranks
            })
            .collect()
    }

    /// `table[d][h] = rank_d(h)`.
    pub fn doctor_rank_table(&self) -> Vec<Vec<Rank>> {
        self.doctor_lists
            .iter()
            .map(|list| {
                let mut ranks = vec![0; list.len()];
                for (pos, h) in list.iter().enumerate() {
                    ranks[h.index()] = pos as Rank + 1;
                }
                ranks
            })
            .collect()
    }

    /// Explicit-mode oracle; `seed` only drives amnesiac draws and random
    /// proposal orders.
    pub fn oracle(&self, seed: u64) -> PreferenceOracle {
        PreferenceOracle::explicit(self.clone(), seed)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        let mut lines = body.split('\n').enumerate().map(|(i, l)| (i + 1, l));

        let (_, header) = lines.next().ok_or(Error::InstanceParse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let dims = parse_numbers(1, header)?;
        let &[nd, nh] = dims.as_slice() else {
            return Err(Error::InstanceParse {
                line: 1,
                reason: format!("header must be \"D H\", found {} fields", dims.len()),
            });
        };
        if nd == 0 || nh == 0 {
            return Err(Error::InstanceParse {
                line: 1,
                reason: "both sides must be non-empty".into(),
            });
        }

        let mut take = |count: u32, width: u32| -> Result<Vec<Vec<u32>>> {
            (0..count)
                .map(|_| {
                    let (no, line) = lines.next().ok_or(Error::InstanceParse {
                        line: 0,
                        reason: "unexpected end of file".into(),
                    })?;
                    let nums = parse_numbers(no, line)?;
                    if nums.len() != width as usize {
                        return Err(Error::InstanceParse {
                            line: no,
                            reason: format!("expected {width} entries, found {}", nums.len()),
                        });
                    }
                    nums.into_iter()
                        .map(|x| {
                            if x == 0 || x > width {
                                Err(Error::InstanceParse {
                                    line: no,
                                    reason: format!("index {x} outside 1..={width}"),
                                })
                            } else {
                                Ok(x - 1)
                            }
                        })
                        .collect()
                })
                .collect()
        };
        let doctor_rows = take(nd, nh)?;
        let hospital_rows = take(nh, nd)?;
        if let Some((no, _)) = lines.next() {
            return Err(Error::InstanceParse {
                line: no,
                reason: "trailing content".into(),
            });
        }

        Instance::new(
            doctor_rows
                .into_iter()
                .map(|r| r.into_iter().map(Hospital).collect())
                .collect(),
            hospital_rows
                .into_iter()
                .map(|r| r.into_iter().map(Doctor).collect())
                .collect(),
        )
    }

    pub fn to_text(&self) -> String {
        let shape = self.shape();
        let mut out = format!("{} {}\n", shape.num_doctors, shape.num_hospitals);
        for list in &self.doctor_lists {
            join_line(&mut out, list.iter().map(|h| h.one_based()));
        }
        for list in &self.hospital_lists {
            join_line(&mut out, list.iter().map(|d| d.one_based()));
        }
        out
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn join_line(out: &mut String, items: impl Iterator<Item = u32>) {
    for (i, x) in items.enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{x}").unwrap();
    }
    out.push('\n');
}

fn parse_numbers(line: usize, text: &str) -> Result<Vec<u32>> {
    text.split(' ')
        .map(|tok| {
            if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
                return Err(Error::InstanceParse {
                    line,
                    reason: format!("bad token {tok:?}"),
                });
            }
            tok.parse().map_err(|_| Error::InstanceParse {
                line,
                reason: format!("bad number {tok:?}"),
            })
        })
        .collect()
}
