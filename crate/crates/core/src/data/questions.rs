use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::Language;
use crate::error::{Error, Result};

/// The English runaway-ad attributes: `(id, question, annotated count)`.
pub const RUNAWAYS_ATTRIBUTES: [(&str, &str, usize); 35] = [
    ("accused_of_crime", "What crimes did the person commit?", 107),
    ("also_known_as", "What other aliases does the person have?", 103),
    ("clothing", "What clothes did the person wear?", 656),
    ("companions", "What are the names of the person's friends?", 49),
    ("contact_address", "Where does the contact person of the ad live?", 740),
    ("contact_occupation", "What does the contact of the ad do for a living?", 278),
    ("country_marks", "What country marks does the person have?", 63),
    ("destination_region", "What is the destination region of the person?", 15),
    ("destination_specified", "What is the name of the destination?", 118),
    ("disease", "What kind of diseases does the person have?", 91),
    ("given_name", "What is the given name of the person?", 693),
    ("given_surname", "What is the last name of the person?", 196),
    ("injuries", "How was the person injured?", 63),
    ("language", "What are the communication skills of the person?", 319),
    ("literacy", "What is the literacy level of the person?", 8),
    ("motivation", "Why did the person escape his owner?", 4),
    ("name_of_contact", "Who is the contact person for the ad?", 678),
    ("origin", "Where does the person originate from?", 28),
    ("other_reward", "What other rewards were offered?", 382),
    ("owner", "Who is the owner of the person?", 395),
    ("owner_address", "Where does the owner of the person live?", 270),
    ("owner_occupation", "What does the owner of the person do for a living?", 78),
    ("personality", "What are the personality traits of the person?", 15),
    ("physical_characteristics", "What are the physical characteristics of the person?", 568),
    ("physical_scars", "What scars does the person have?", 131),
    ("plantation_marks", "What plantation marks does the person have?", 23),
    ("racial_descriptor", "What is the ethnicity of the person?", 807),
    ("ran_from_region", "What is the name of the region the person escaped from?", 3),
    ("ran_from_specified", "What is the name of the place the person escaped from?", 406),
    ("religion", "What is the religion of the person?", 13),
    ("runaway_date", "What was the date of the event?", 15),
    ("skills", "What is the set of skills of the person?", 55),
    ("specified_occupation", "What does the person do for a living?", 98),
    ("stutters", "Does the person stutter?", 22),
    ("total_reward", "How much reward is offered?", 780),
];

/// Ordered attribute → question mapping. Insertion order is significant:
/// it fixes record order and breaks ties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeQuestionMap {
    pub language: Language,
    entries: IndexMap<String, String>,
}

impl AttributeQuestionMap {
    pub fn new(language: Language) -> Self {
        AttributeQuestionMap {
            language,
            entries: IndexMap::new(),
        }
    }

    /// The 35-attribute English map used for the runaway-ads corpus.
    pub fn runaways_en() -> Self {
        let mut map = Self::new(Language::En);
        for (attr, question, _) in RUNAWAYS_ATTRIBUTES {
            map.insert(attr, question).expect("builtin table is valid");
        }
        map
    }

    pub fn insert(&mut self, attribute: &str, question: &str) -> Result<()> {
        let attribute = attribute.trim();
        let question = question.trim();
        if attribute.is_empty() {
            return Err(Error::InvalidArgument("empty attribute id".into()));
        }
        if question.is_empty() {
            return Err(Error::InvalidArgument(format!("empty question for `{attribute}`")));
        }
        if self.entries.contains_key(attribute) {
            return Err(Error::DuplicateIds(vec![attribute.to_string()]));
        }
        self.entries.insert(attribute.to_string(), question.to_string());
        Ok(())
    }

    pub fn get(&self, attribute: &str) -> Option<&str> {
        self.entries.get(attribute).map(String::as_str)
    }

    pub fn contains(&self, attribute: &str) -> bool {
        self.entries.contains_key(attribute)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(a, q)| (a.as_str(), q.as_str()))
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn position(&self, attribute: &str) -> Option<usize> {
        self.entries.get_index_of(attribute)
    }

    /// Parses `attribute<TAB>question` lines. Blank lines are skipped.
    pub fn from_tsv(src: &str, language: Language) -> Result<Self> {
        let mut map = Self::new(language);
        for (lineno, line) in src.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (attr, question) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(format!("line {}", lineno + 1), "expected attribute<TAB>question"))?;
            map.insert(attr, question)
                .map_err(|e| Error::format(format!("line {}", lineno + 1), e.to_string()))?;
        }
        if map.is_empty() {
            return Err(Error::InvalidArgument("question map has no entries".into()));
        }
        Ok(map)
    }

    pub fn to_tsv(&self) -> String {
        self.iter().map(|(a, q)| format!("{a}\t{q}\n")).collect()
    }

    pub fn load_tsv(path: &Path, language: Language) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&src, language).map_err(|e| match e {
            Error::Format { path: loc, message } => Error::format(format!("{}: {loc}", path.display()), message),
            other => other,
        })
    }

    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_map_has_35_attributes_and_8270_annotations() {
        let map = AttributeQuestionMap::runaways_en();
        assert_eq!(map.len(), 35);
        assert_eq!(map.get("total_reward"), Some("How much reward is offered?"));
        let total: usize = RUNAWAYS_ATTRIBUTES.iter().map(|(_, _, n)| n).sum();
        assert_eq!(total, 8270);
    }

    #[test]
    fn tsv_round_trip_keeps_order() {
        let map = AttributeQuestionMap::runaways_en();
        let back = AttributeQuestionMap::from_tsv(&map.to_tsv(), Language::En).unwrap();
        assert_eq!(back, map);
        assert_eq!(back.position("clothing"), Some(2));
    }

    #[test]
    fn tsv_rejects_bad_lines() {
        assert!(matches!(
            AttributeQuestionMap::from_tsv("a\tq\nno-tab-here\n", Language::En),
            Err(Error::Format { .. })
        ));
        assert!(AttributeQuestionMap::from_tsv("a\tq\na\tq2\n", Language::En).is_err());
        assert!(AttributeQuestionMap::from_tsv("a\t  \n", Language::En).is_err());
        assert!(AttributeQuestionMap::from_tsv("\n\n", Language::En).is_err());
    }
}
