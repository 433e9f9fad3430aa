use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{EnvError, EnvHandle, Environment, ScriptedState, StepOutcome, INVALID_ACTION};
use crate::trajectory::Action;

pub const BUY: &str = "click[Buy Now]";
pub const BACK: &str = "click[Back to Search]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Product {
    pub id: String,
    #[serde(rename = "type")]
    pub product_type: String,
    pub price: f64,
    pub attributes: BTreeSet<String>,
    pub options: BTreeSet<String>,
}

impl Product {
    pub fn title(&self) -> String {
        let join = |s: &BTreeSet<String>| s.iter().map(String::as_str).collect::<Vec<_>>().join(", ");
        format!("{} ({}; {})", self.product_type, join(&self.attributes), join(&self.options))
    }
}

/// What the instruction asks for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    #[serde(rename = "type")]
    pub product_type: String,
    pub price_cap: f64,
    pub attributes: BTreeSet<String>,
    pub options: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiniShopTask {
    pub task_id: String,
    pub instruction: String,
    /// Query the oracle types into the search box.
    pub query: String,
    pub target: Target,
    pub catalog: Vec<Product>,
}

/// Purchase reward as an exact fraction `(numerator, denominator)`:
/// `r_type * (|U_att ∩ Y_att| + |U_opt ∩ Y_opt| + [price <= cap]) / (|U_att| + |U_opt| + 1)`.
pub fn reward_fraction(purchased: &Product, target: &Target) -> (u32, u32) {
    let denominator = (target.attributes.len() + target.options.len() + 1) as u32;
    if purchased.product_type != target.product_type {
        return (0, denominator);
    }
    let attributes = target.attributes.intersection(&purchased.attributes).count();
    let options = target.options.intersection(&purchased.options).count();
    let price = usize::from(purchased.price <= target.price_cap);
    ((attributes + options + price) as u32, denominator)
}

/// Purchase reward in `[0, 1]`; see [`reward_fraction`].
pub fn reward_webshop(purchased: &Product, target: &Target) -> f64 {
    let (n, d) = reward_fraction(purchased, target);
    f64::from(n) / f64::from(d)
}

impl MiniShopTask {
    pub fn validate(&self) -> Result<(), EnvError> {
        let invalid = |why: &str| Err(EnvError::InvalidTask { task_id: self.task_id.clone(), reason: why.into() });
        if !(3..=10).contains(&self.catalog.len()) {
            return invalid("catalog must hold 3 to 10 products");
        }
        for (i, p) in self.catalog.iter().enumerate() {
            if self.catalog[..i].iter().any(|q| q.id == p.id) {
                return invalid("product ids must be unique");
            }
        }
        let best = self.optimum_index();
        let top = reward_fraction(&self.catalog[best], &self.target);
        let ties = self.catalog.iter().filter(|p| reward_fraction(p, &self.target) == top).count();
        if ties != 1 {
            return invalid("exactly one product must maximize the reward");
        }
        Ok(())
    }

    /// Index of the first reward-maximizing product.
    pub fn optimum_index(&self) -> usize {
        let reward = |i: usize| reward_fraction(&self.catalog[i], &self.target);
        let mut best = 0;
        for i in 1..self.catalog.len() {
            let ((n, d), (bn, bd)) = (reward(i), reward(best));
            if u64::from(n) * u64::from(bd) > u64::from(bn) * u64::from(d) {
                best = i;
            }
        }
        best
    }

    pub fn search_observation(&self) -> String {
        format!("WebShop. Instruction: {} [Search]", self.instruction)
    }

    pub fn results_observation(&self, query: &str) -> String {
        let listing: Vec<String> =
            self.catalog.iter().map(|p| format!("[{}] {} ${:.2}", p.id, p.title(), p.price)).collect();
        format!("Search results for \"{query}\": {} [Back to Search]", listing.join("; "))
    }

    pub fn product_observation(&self, index: usize) -> String {
        let p = &self.catalog[index];
        format!("Product {}: {}. Price: ${:.2}. [Buy Now] [Back to Search]", p.id, p.title(), p.price)
    }

    pub fn oracle_actions(&self) -> Vec<Action> {
        let best = &self.catalog[self.optimum_index()];
        Vec::from([Action::env(format!("search[{}]", self.query)), Action::env(format!("click[{}]", best.id)), Action::env(BUY)])
    }

    /// Action sequence that buys `product` instead of the optimum.
    pub fn purchase_actions(&self, product: usize) -> Vec<Action> {
        let p = &self.catalog[product];
        Vec::from([Action::env(format!("search[{}]", self.query)), Action::env(format!("click[{}]", p.id)), Action::env(BUY)])
    }

    pub fn scripted_states(&self) -> Vec<ScriptedState> {
        let best = self.optimum_index();
        let decoy = (0..self.catalog.len()).find(|&i| i != best).unwrap_or(best);
        let search = format!("search[{}]", self.query);
        let mut states = Vec::from([
            ScriptedState {
                observation: self.search_observation(),
                context: "On the search page".into(),
                oracle_action: search.clone(),
                default_action: search,
            },
            ScriptedState {
                observation: self.results_observation(&self.query),
                context: format!("On the search results page for {}", self.query),
                oracle_action: format!("click[{}]", self.catalog[best].id),
                default_action: format!("click[{}]", self.catalog[decoy].id),
            },
        ]);
        for i in 0..self.catalog.len() {
            states.push(ScriptedState {
                observation: self.product_observation(i),
                context: format!("On the product page for {}", self.catalog[i].title()),
                oracle_action: BUY.into(),
                default_action: BUY.into(),
            });
        }
        states
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Page {
    Search,
    Results,
    Product(usize),
    Done,
}

#[derive(Debug, Clone)]
pub struct MiniShopEnv {
    task: MiniShopTask,
    page: Page,
    purchased: Option<usize>,
    handle: EnvHandle,
}

impl MiniShopEnv {
    pub fn new(task: MiniShopTask) -> Self {
        let observation = task.search_observation();
        Self { task, page: Page::Search, purchased: None, handle: EnvHandle::start(observation) }
    }

    pub fn task(&self) -> &MiniShopTask {
        &self.task
    }
}

fn bracketed<'a>(text: &'a str, verb: &str) -> Option<&'a str> {
    let head = text.get(..verb.len() + 1)?;
    if head.eq_ignore_ascii_case(&format!("{verb}[")) && text.ends_with(']') {
        Some(text[verb.len() + 1..text.len() - 1].trim())
    } else {
        None
    }
}

impl Environment for MiniShopEnv {
    fn task_id(&self) -> &str {
        &self.task.task_id
    }

    fn instruction(&self) -> &str {
        &self.task.instruction
    }

    /// The shop is deterministic; the seed is ignored.
    fn reset(&mut self, _seed: u64) -> String {
        *self = Self::new(self.task.clone());
        self.handle.observation.clone()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        if self.page == Page::Done {
            return Err(EnvError::StepAfterDone);
        }
        let text = action.text.trim();
        let query = if action.is_think() { None } else { bracketed(text, "search") };
        let click = if action.is_think() { None } else { bracketed(text, "click") };
        let next = match (self.page, query, click) {
            (Page::Search, Some(q), _) if !q.is_empty() => Some((Page::Results, self.task.results_observation(q))),
            (Page::Results | Page::Product(_), _, Some(c)) if c.eq_ignore_ascii_case("Back to Search") => {
                Some((Page::Search, self.task.search_observation()))
            }
            (Page::Results, _, Some(c)) => self
                .task
                .catalog
                .iter()
                .position(|p| p.id.eq_ignore_ascii_case(c))
                .map(|i| (Page::Product(i), self.task.product_observation(i))),
            (Page::Product(i), _, Some(c)) if c.eq_ignore_ascii_case("Buy Now") => {
                self.purchased = Some(i);
                let (n, d) = reward_fraction(&self.task.catalog[i], &self.task.target);
                Some((Page::Done, format!("Thank you for your purchase. Your score is {n}/{d}.")))
            }
            _ => None,
        };
        let Some((page, observation)) = next else {
            return Ok(self.handle.record(INVALID_ACTION.into(), 0.0, false));
        };
        self.page = page;
        let reward = match (page, self.purchased) {
            (Page::Done, Some(i)) => reward_webshop(&self.task.catalog[i], &self.task.target),
            _ => 0.0,
        };
        Ok(self.handle.record(observation, reward, page == Page::Done))
    }

    fn handle(&self) -> EnvHandle {
        self.handle.clone()
    }

    /// A purchase with reward 1.
    fn success(&self) -> bool {
        self.purchased.is_some_and(|i| {
            let (n, d) = reward_fraction(&self.task.catalog[i], &self.task.target);
            n == d
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| (*s).into()).collect()
    }

    fn product(id: &str, ty: &str, price: f64, att: &[&str], opt: &[&str]) -> Product {
        Product { id: id.into(), product_type: ty.into(), price, attributes: set(att), options: set(opt) }
    }

    fn task() -> MiniShopTask {
        MiniShopTask {
            task_id: "s".into(),
            instruction: "Buy organic vegan tea in a large pack under $20.".into(),
            query: "organic vegan tea".into(),
            target: Target {
                product_type: "tea".into(),
                price_cap: 20.0,
                attributes: set(&["organic", "vegan"]),
                options: set(&["large"]),
            },
            catalog: Vec::from([
                product("B01", "tea", 25.0, &["organic", "vegan"], &["large"]),
                product("B02", "tea", 12.5, &["organic", "vegan"], &["large"]),
                product("B03", "coffee", 9.0, &["organic", "vegan"], &["large"]),
            ]),
        }
    }

    #[test]
    fn three_quarter_case() {
        let target = Target {
            product_type: "t".into(),
            price_cap: 10.0,
            attributes: set(&["a", "b"]),
            options: set(&["c"]),
        };
        let p = product("x", "t", 10.0, &["a"], &["c"]);
        assert_eq!(reward_fraction(&p, &target), (3, 4));
        assert_eq!(reward_webshop(&p, &target), 0.75);
    }

    #[test]
    fn type_mismatch_is_zero() {
        let t = task();
        assert_eq!(reward_webshop(&t.catalog[2], &t.target), 0.0);
    }

    #[test]
    fn optimum_is_unique() {
        let t = task();
        t.validate().unwrap();
        assert_eq!(t.optimum_index(), 1);
    }

    #[test]
    fn buying_the_optimum_pays_one() {
        let t = task();
        let mut env = MiniShopEnv::new(t.clone());
        env.reset(0);
        let mut last = None;
        for a in t.oracle_actions() {
            last = Some(env.step(&a).unwrap());
        }
        let last = last.unwrap();
        assert!(last.done);
        assert_eq!(last.reward, 1.0);
        assert!(env.success());
        assert_eq!(env.step(&Action::env(BUY)), Err(EnvError::StepAfterDone));
    }

    #[test]
    fn navigation_and_invalid_actions() {
        let mut env = MiniShopEnv::new(task());
        env.reset(0);
        assert_eq!(env.step(&Action::env("click[B01]")).unwrap().observation, INVALID_ACTION);
        assert!(env.step(&Action::env("search[tea]")).unwrap().observation.starts_with("Search results for \"tea\""));
        assert!(env.step(&Action::env("click[b03]")).unwrap().observation.starts_with("Product B03"));
        assert!(env.step(&Action::env(BACK)).unwrap().observation.starts_with("WebShop."));
        let out = env.step(&Action::env("buy it")).unwrap();
        assert_eq!((out.observation.as_str(), out.done), (INVALID_ACTION, false));
    }
}
