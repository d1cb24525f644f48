use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ProviderError;
use crate::envelope::MessagePayload;

pub const DEFAULT_TEMPLATE: &str = "customer";
pub const TEMPLATES: [&str; 2] = ["customer", "order"];

/// What message the provider produces. Identical specs produce identical
/// bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub record_count: usize,
    pub seed: u64,
    pub template_id: String,
}

impl GeneratorSpec {
    pub fn new(record_count: usize, seed: u64) -> Self {
        Self { record_count, seed, template_id: DEFAULT_TEMPLATE.to_string() }
    }

    pub fn with_template(mut self, template_id: impl Into<String>) -> Self {
        self.template_id = template_id.into();
        self
    }
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self::new(100, 1)
    }
}

const FIRST: [&str; 16] = [
    "Amina", "Bello", "Chidi", "Danjuma", "Emeka", "Fatima", "Garba", "Hauwa", "Ibrahim", "Jumoke", "Kabiru",
    "Ladi", "Musa", "Ngozi", "Obinna", "Zainab",
];
const LAST: [&str; 12] = [
    "Abubakar", "Adamu", "Bala", "Dauda", "Eze", "Idris", "Lawal", "Mohammed", "Okafor", "Sani", "Usman", "Yusuf",
];
const CITY: [&str; 10] = [
    "Maiduguri", "Kano", "Kaduna", "Abuja", "Lagos", "Damaturu", "Sokoto", "Jos", "Yola", "Bauchi",
];
const STATUS: [&str; 4] = ["active", "pending", "suspended", "closed"];
const PRODUCT: [&str; 8] = [
    "millet", "sorghum", "groundnut", "cowpea", "sesame", "maize", "rice", "cassava",
];
const UNIT: [&str; 3] = ["bag", "crate", "tonne"];

fn pick<'a, R: Rng>(rng: &mut R, words: &[&'a str]) -> &'a str {
    words[rng.random_range(0..words.len())]
}

fn customer<R: Rng>(out: &mut String, id: usize, rng: &mut R) {
    let first = pick(rng, &FIRST);
    let last = pick(rng, &LAST);
    let city = pick(rng, &CITY);
    let status = pick(rng, &STATUS);
    let balance = rng.random_range(0..100_000u32);
    out.push_str(&format!(
        "<record id=\"{id}\"><name>{first} {last}</name><email>{}.{}@example.org</email>\
         <city>{city}</city><status>{status}</status><balance currency=\"NGN\">{}.{:02}</balance></record>",
        first.to_lowercase(),
        last.to_lowercase(),
        balance / 100,
        balance % 100
    ));
}

fn order<R: Rng>(out: &mut String, id: usize, rng: &mut R) {
    let product = pick(rng, &PRODUCT);
    let unit = pick(rng, &UNIT);
    let quantity = rng.random_range(1..500u32);
    let city = pick(rng, &CITY);
    out.push_str(&format!(
        "<record id=\"{id}\"><order><product>{product}</product><quantity unit=\"{unit}\">{quantity}</quantity>\
         <destination>{city}</destination></order></record>"
    ));
}

/// Renders `<records>` holding `record_count` template records with ids
/// counting from 1 and field text drawn from a seeded generator.
pub fn generate_message(spec: &GeneratorSpec) -> Result<MessagePayload, ProviderError> {
    let render: fn(&mut String, usize, &mut ChaCha8Rng) = match spec.template_id.as_str() {
        "customer" => customer,
        "order" => order,
        other => return Err(ProviderError::UnknownTemplate(other.to_string())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = String::with_capacity(20 + spec.record_count * 200);
    out.push_str("<records>");
    for id in 1..=spec.record_count {
        render(&mut out, id, &mut rng);
    }
    out.push_str("</records>");
    Ok(MessagePayload::xml(out.into_bytes()))
}
