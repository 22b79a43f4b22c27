// SQuAD-v2 JSON reading and writing.
//
// Layout: {"version", "data": [{"title", "paragraphs": [{"context", "qas": [
//   {"id", "question", "answers": [{"text", "answer_start"}], "is_impossible"}]}]}]}
//
// `answer_start` counts Unicode code points. Record fields outside the SQuAD
// schema are carried implicitly: `source_ad_id` is the article title and
// `attribute` is the suffix of an `<ad_id>::<attribute>` record id.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::{check_records, Answer, QARecord};
use crate::error::{Error, Result};

const VERSION: &str = "v2.0";

#[derive(Serialize)]
struct SquadFile<'a> {
    version: &'a str,
    data: Vec<Article<'a>>,
}

#[derive(Serialize)]
struct Article<'a> {
    title: &'a str,
    paragraphs: Vec<Paragraph<'a>>,
}

#[derive(Serialize)]
struct Paragraph<'a> {
    context: &'a str,
    qas: Vec<Qa<'a>>,
}

#[derive(Serialize)]
struct Qa<'a> {
    id: &'a str,
    question: &'a str,
    answers: &'a [Answer],
    is_impossible: bool,
}

/// Serializes records, grouping consecutive records of the same ad into one
/// article and consecutive records sharing a context into one paragraph.
pub fn to_squad_string(records: &[QARecord]) -> Result<String> {
    check_records(records)?;
    let unrepresentable: Vec<String> = records
        .iter()
        .filter(|r| QARecord::attribute_from_id(&r.id) != r.attribute)
        .map(|r| r.id.clone())
        .collect();
    if !unrepresentable.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "record ids must be `<ad_id>::<attribute>` to preserve the attribute: {}",
            unrepresentable.join(", ")
        )));
    }

    let mut data: Vec<Article> = Vec::new();
    for r in records {
        let qa = Qa {
            id: &r.id,
            question: &r.question,
            answers: &r.answers,
            is_impossible: r.is_impossible,
        };
        match data.last_mut() {
            Some(article) if article.title == r.source_ad_id => match article.paragraphs.last_mut() {
                Some(p) if p.context == r.context => p.qas.push(qa),
                _ => article.paragraphs.push(Paragraph {
                    context: &r.context,
                    qas: vec![qa],
                }),
            },
            _ => data.push(Article {
                title: &r.source_ad_id,
                paragraphs: vec![Paragraph {
                    context: &r.context,
                    qas: vec![qa],
                }],
            }),
        }
    }
    let file = SquadFile { version: VERSION, data };
    Ok(serde_json::to_string(&file).expect("SQuAD structures serialize"))
}

pub fn save_squad_file(records: &[QARecord], path: &Path) -> Result<()> {
    let json = to_squad_string(records)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_squad_file(path: &Path) -> Result<Vec<QARecord>> {
    let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_squad_str(&src)
}

fn field<'v>(obj: &'v Value, key: &str, at: &str) -> Result<&'v Value> {
    obj.as_object()
        .ok_or_else(|| Error::format(at, "expected an object"))?
        .get(key)
        .ok_or_else(|| Error::format(format!("{at}.{key}"), "missing field"))
}

fn str_field<'v>(obj: &'v Value, key: &str, at: &str) -> Result<&'v str> {
    field(obj, key, at)?
        .as_str()
        .ok_or_else(|| Error::format(format!("{at}.{key}"), "expected a string"))
}

fn array_field<'v>(obj: &'v Value, key: &str, at: &str) -> Result<&'v Vec<Value>> {
    field(obj, key, at)?
        .as_array()
        .ok_or_else(|| Error::format(format!("{at}.{key}"), "expected an array"))
}

pub fn parse_squad_str(src: &str) -> Result<Vec<QARecord>> {
    let root: Value = serde_json::from_str(src).map_err(|e| Error::format("$", e.to_string()))?;
    let mut records = Vec::new();
    for (ai, article) in array_field(&root, "data", "$")?.iter().enumerate() {
        let at = format!("data[{ai}]");
        let title = match article.get("title") {
            None => "",
            Some(v) => v
                .as_str()
                .ok_or_else(|| Error::format(format!("{at}.title"), "expected a string"))?,
        };
        for (pi, paragraph) in array_field(article, "paragraphs", &at)?.iter().enumerate() {
            let at = format!("{at}.paragraphs[{pi}]");
            let context = str_field(paragraph, "context", &at)?;
            for (qi, qa) in array_field(paragraph, "qas", &at)?.iter().enumerate() {
                let at = format!("{at}.qas[{qi}]");
                let id = str_field(qa, "id", &at)?;
                let question = str_field(qa, "question", &at)?;
                let mut answers = Vec::new();
                for (xi, ans) in array_field(qa, "answers", &at)?.iter().enumerate() {
                    let at = format!("{at}.answers[{xi}]");
                    let text = str_field(ans, "text", &at)?;
                    let start = field(ans, "answer_start", &at)?
                        .as_u64()
                        .ok_or_else(|| Error::format(format!("{at}.answer_start"), "expected a non-negative integer"))?;
                    answers.push(Answer {
                        text: text.to_string(),
                        answer_start: start as usize,
                    });
                }
                let is_impossible = match qa.get("is_impossible") {
                    None => answers.is_empty(),
                    Some(v) => v
                        .as_bool()
                        .ok_or_else(|| Error::format(format!("{at}.is_impossible"), "expected a boolean"))?,
                };
                records.push(QARecord {
                    id: id.to_string(),
                    context: context.to_string(),
                    question: question.to_string(),
                    answers,
                    is_impossible,
                    attribute: QARecord::attribute_from_id(id).to_string(),
                    source_ad_id: title.to_string(),
                });
            }
        }
    }
    check_records(&records)?;
    Ok(records)
}
