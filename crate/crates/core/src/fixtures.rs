//! Bundled reference data and the synthetic replay fixture.
//!
//! The article list carries real titles, dates, categories and URLs; the
//! summaries, posts, few-shot pairs and metric trajectories are synthetic.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDate, TimeZone};
use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    embed_labeled, train, HashedBagOfWords, HateModel, Label, LabeledText, TrainConfig,
};
use crate::experiment::{replay_corpus, ExperimentError, ReplayInputs, ScheduleConfig};
use crate::ingest::{build_query, CorpusEntry, QuerySpec, ScriptedDecision, SimScript, TrajectoryPoint};
use crate::responder::{Article, ArticleCategory, ArticleStore, FewShotPair, FewShotSet, Responder};
use crate::review::RejectionCode;
use crate::store::Store;
use crate::types::{Arm, AuthorId, PostId, ReviewerId, Timestamp};

pub const CORPUS_SEED: u64 = 20_230_824;
pub const EXPERIMENT_SEED: u64 = 7;
pub const CORPUS_SIZE: usize = 1000;
pub const PLANTED_HARMFUL: usize = 51;
pub const PLANTED_HARMFUL_REPLIES: usize = 11;
/// Stratum targets for (original posts, min 10 impressions, engagement).
pub const TARGET_CG_MEAN: f64 = 0.0346;
pub const TARGET_EG_MEAN: f64 = 0.0266;
const CG_BASE: i64 = 346;
const EG_BASE: i64 = 266;
const E_SCALE: i64 = 10_000;

use ArticleCategory::*;

const ARTICLES: &[(&str, &str, ArticleCategory, &str, &str)] = &[
    ("One-time Financial Benefit", "2023-07-28", BenefitsAndAllowances,
     "https://ukraina.interwencjaprawna.pl/wp-content/uploads/2023/01/Broczura-SIP_PL.pdf",
     "Osoby z Ukrainy, które przyjechały po wybuchu wojny, mogły raz otrzymać 300 zł świadczenia na utrzymanie, czyli na jedzenie, ubrania i środki higieny."),
    ("Child Benefit (so-called 500 Plus)", "2023-07-28", BenefitsAndAllowances,
     "https://ukraina.interwencjaprawna.pl/wp-content/uploads/2023/01/Broczura-SIP_PL.pdf",
     "Świadczenie 500 plus dla dzieci z Ukrainy przysługuje na tych samych zasadach co polskim rodzinom, tylko przy legalnym pobycie i mieszkaniu z dzieckiem w Polsce."),
    ("Polish Authorities’ Expenditures on Aid to Ukraine", "2023-07-26", ExpendituresAndCosts,
     "https://www.infor.pl/prawo/nowosci-prawne/5635962,Polska-pomoc-dla-Ukrainy-2022-ile-kosztowala.html",
     "Zestawienie wydatków państwa na pomoc uchodźcom z Ukrainy w 2022 roku, z podziałem na zakwaterowanie, wyżywienie, świadczenia i opiekę zdrowotną."),
    ("Number and Demographics of Ukrainians in Poland", "2023-07-26", StatisticalData,
     "https://nbp.pl/wp-content/uploads/2023/04/Sytuacja-zyciowa-i-ekonomiczna-migrantow-z-Ukrainy-w-Polsce_raport-z-badania-2022.pdf",
     "Raport banku centralnego opisuje liczbę migrantów z Ukrainy w Polsce, ich wiek, wykształcenie, zatrudnienie i plany na przyszłość."),
    ("Ukrainian Army: Russians Want to Practice Destroying Civilian Ships Sailing to and from Ukrainian Ports [LIVE REPORT]", "2023-07-26", MilitaryActivities,
     "https://www.infor.pl/prawo/nowosci-prawne/5635962,Polska-pomoc-dla-Ukrainy-2022-ile-kosztowala.html",
     "Relacja na żywo z wojny: armia ukraińska ostrzega przed rosyjskimi ćwiczeniami ataków na cywilne statki płynące do portów Ukrainy."),
    ("Sentiment and Opinion of Poles on Helping Ukrainians", "2023-07-26", OpinionsAndAnalysis,
     "https://www.rp.pl/spoleczenstwo/art38594711-polacy-wciaz-chca-pomagac-ukraincom-ale-na-duzo-mniejsza-skale-niz-zaraz-po-wybuchu-wojny",
     "Sondaże pokazują, że Polacy nadal chcą pomagać Ukraińcom, choć w mniejszej skali niż w pierwszych tygodniach wojny."),
    ("GDP Growth in Poland in the 1st Quarter of 2023", "2023-07-26", StatisticalData,
     "https://businessinsider.com.pl/gospodarka/wzrost-polskiej-gospodarki-najwyzszy-w-europie-w-pkb-gonimy-szwajcarie/zs7lr6l",
     "Dane o wzroście gospodarczym Polski w pierwszym kwartale 2023 roku na tle innych krajów Europy."),
    ("Scandalous Banners at the Ekstraklasa Match. Hooligans Did Not Show Off - Śląsk Wrocław", "2023-07-30", CurrentNews,
     "https://sport.wprost.pl/pilka-nozna/ekstraklasa/11328016/skandaliczne-transparenty-na-meczu-ekstraklasy-kibole-sie-nie-popisali.html",
     "Na meczu Ekstraklasy we Wrocławiu kibice wywiesili obraźliwe transparenty, które spotkały się z krytyką klubu i mediów."),
    ("Import of Grain, Food from Ukraine to the EU and Poland", "2023-04-11", OpinionsAndAnalysis,
     "https://www.osw.waw.pl/pl/publikacje/komentarze-osw/2023-04-11/wzrost-importu-zywnosci-z-ukrainy-do-ue-uwarunkowania-i",
     "Analiza przyczyn i skutków wzrostu importu zboża i żywności z Ukrainy do Unii Europejskiej i Polski."),
    ("President Zelensky’s Thanks for Help", "2023-04-05", CurrentNews,
     "https://samorzad.pap.pl/kategoria/aktualnosci/prezydent-zelenski-drogi-rzeszowie-dziekuje-ci-za-ze-zostales-pierwszym",
     "Prezydent Zełenski dziękował Rzeszowowi i Polakom za pomoc udzieloną Ukrainie od pierwszych dni wojny."),
    ("How Much Tax Do Ukrainians Pay in Poland?", "2022-11-01", ExpendituresAndCosts,
     "https://www.tvp.info/64268612/ukraincy-zaplacili-w-polsce-10-mld-zlotych-podatku",
     "Ukraińcy pracujący w Polsce płacą podatki i składki, które zasilają budżet państwa kwotami liczonymi w miliardach złotych."),
    ("Retirement After a Few Days of Work", "2023-06-16", BenefitsAndAllowances,
     "https://demagog.org.pl/wypowiedzi/emerytura-dla-ukraincow-po-dniu-pracy-to-nieprawda/",
     "Informacja, że Ukraińcy dostają w Polsce emeryturę po kilku dniach pracy, jest nieprawdziwa; obowiązują te same zasady stażu co wszystkich."),
    ("Transport of Goods Between Ukraine and the EU. On What Terms Does It Operate?", "2023-04-18", Others,
     "https://demagog.org.pl/wypowiedzi/przewoz-towarow-miedzy-ukraina-i-ue-na-jakich-zasadach-dziala/",
     "Wyjaśnienie zasad przewozu towarów między Ukrainą a Unią Europejską i zezwoleń dla przewoźników."),
    ("Tax Obligations of Ukrainian Citizens Working in Poland", "2022-11-17", ExpendituresAndCosts,
     "https://raczkowski.eu/prohr/blog/2022/ukrainiec-przebywajacy-w-polsce-ponad-183-dni-placi-pit-oraz-inne-obowiazki-podatkowe-obywateli-ukrainy-pracujacych-w-polsce-pro-hr-listopad-2022.html#:~:text=Obywatel",
     "Obywatel Ukrainy mieszkający w Polsce ponad 183 dni w roku płaci PIT i ma takie same obowiązki podatkowe jak inni pracownicy."),
    ("More and More Foreigners Covered by Social Insurance", "2022-08-09", ExpendituresAndCosts,
     "https://www.zus.pl/-/coraz-wi",
     "Rośnie liczba cudzoziemców, w tym Ukraińców, zgłoszonych do ubezpieczeń społecznych i opłacających składki."),
    ("Ukrainian Expenditures Boost Polish Retail", "2022-10-03", StatisticalData,
     "https://www.rp.pl/handel/art37169331-wydatki-ukraincow-zasilaja-polski-handel",
     "Zakupy robione przez Ukraińców w Polsce zwiększają obroty polskich sklepów i firm handlowych."),
    ("Ukrainian Refugees Will Make Poland an Economic Powerhouse?", "2022-12-24", OpinionsAndAnalysis,
     "https://superbiz.se.pl/wiadomosci/uchodzcy-z-ukrainy-stworza-z-polski-gospodarcza-potege-rozmowa-aa-BxYg-6UV8-ciwZ.html",
     "Rozmowa o tym, jak uchodźcy z Ukrainy mogą wzmocnić polską gospodarkę i rynek pracy w kolejnych latach."),
    ("Ukrainians Are Starting Companies in Poland", "2023-08-09", OpinionsAndAnalysis,
     "https://edialog.media/2023/08/09/co-dziesiata-firma-w-polsce-ukrainska/",
     "Co dziesiąta nowa firma w Polsce jest zakładana przez obywateli Ukrainy, którzy tworzą miejsca pracy i płacą podatki."),
    ("Budget Revenues from Taxes and ZUS", "2023-08-09", StatisticalData,
     "https://edialog.media/2023/08/09/co-dziesiata-firma-w-polsce-ukrainska/",
     "Wpływy do budżetu i ZUS od pracujących Ukraińców są wyższe niż koszty wypłacanych im świadczeń."),
    ("Ukrainian Refugees Have Found Jobs in the Polish Labor Market", "2023-02-12", StatisticalData,
     "https://www.rp.pl/rynek-pracy/art37993771-ukrainscy-uchodzcy-odnalezli-sie-na-polskim-rynku-pracy",
     "Większość dorosłych uchodźców z Ukrainy znalazła w Polsce legalną pracę i utrzymuje się samodzielnie."),
    ("Ukrainian Children with Priority to Nursery? That’s Not True", "2023-08-28", OpinionsAndAnalysis,
     "https://demagog.org.pl/wypowiedzi/ukrainskie-dzieci-z-pierszenstwem-do-zlobka-to-nieprawda/",
     "Ukraińskie dzieci nie mają pierwszeństwa w przyjęciu do żłobków; obowiązują je te same kryteria co polskie dzieci."),
    ("How Much Money Did Poland Get from the EU to Support Refugees?", "2023-02-28", ExpendituresAndCosts,
     "https://demagog.org.pl/wypowiedzi/ile-pieniedzy-polska-dostala-od-ue-na-wsparcie-uchodzcow/",
     "Polska otrzymała z Unii Europejskiej środki na wsparcie uchodźców, które pokryły część kosztów pomocy."),
    ("Is Poland Deporting Ukrainians? Repeat of Last Year’s Fake News", "2023-09-05", OpinionsAndAnalysis,
     "https://demagog.org.pl/fake_news/polska-deportuje-ukraincow-powtorka-fake-newsa-sprzed-roku/",
     "Powtarzana w sieci informacja o masowych deportacjach Ukraińców z Polski to fałszywa wiadomość sprzed roku."),
];

/// The 23 verified articles, without embeddings.
pub fn reference_articles() -> ArticleStore {
    let articles = ARTICLES
        .iter()
        .map(|&(title, date, category, url, summary)| Article {
            title: title.to_owned(),
            last_update: NaiveDate::parse_from_str(date, "%Y-%m-%d").expect("valid date"),
            category,
            url: url.to_owned(),
            text: summary.to_owned(),
            summary: summary.to_owned(),
            embedding: None,
        })
        .collect();
    ArticleStore::new(articles).expect("reference articles are valid")
}

pub fn default_fewshot() -> FewShotSet {
    FewShotSet::new(vec![
        FewShotPair {
            tweet: "Ukraińcy dostają u nas wszystko za darmo, a Polak płaci za każdą wizytę u lekarza.".into(),
            response: "To mit. Ukraińcy mają te same zasady co my, a większość z nich pracuje i płaci składki. Lepiej pomagać niż szczuć.".into(),
        },
        FewShotPair {
            tweet: "Wynocha z tymi uchodźcami, zabierają nam pracę!".into(),
            response: "Ukraińcy w Polsce w większości pracują legalnie i płacą podatki. To wsparcie dla gospodarki, nie konkurencja.".into(),
        },
    ])
    .expect("two pairs")
}

const HARMFUL_ANCHORS: &[&str] = &["ukraińcy", "ukraińców", "ukry", "banderowcy", "ukropol", "wynocha", "dzicz", "upadlina"];
const BENIGN_ANCHORS: &[&str] = &["ukraina", "ukraińcy", "ukraińców", "pomoc", "ukraińca", "przebywający"];
const HARMFUL_WORDS: &[&str] = &[
    "darmozjady", "pasożyty", "roszczeniowi", "bandyci", "zabierają", "pieniądze", "wyrzucić",
    "precz", "złodzieje", "wyłudzają", "socjal", "hołota", "nachalni", "wracajcie", "okupanci",
    "żerują", "bezczelni", "wypad", "najeźdźcy", "pijawki",
];
const BENIGN_WORDS: &[&str] = &[
    "wsparcie", "wolontariusze", "zbiórka", "dzieci", "szkoła", "razem", "solidarność",
    "dziękujemy", "praca", "firma", "integracja", "sąsiedzi", "przyjaciele", "kultura",
    "kurs", "rodziny", "schronienie", "lekarze", "koncert", "biblioteka",
];
const NEUTRAL_WORDS: &[&str] = &["w", "i", "na", "to", "się", "polsce", "dziś", "znowu", "ludzie", "wszyscy", "rząd", "miasto", "jak", "już"];

fn compose(rng: &mut ChaCha8Rng, harmful: bool, class_words: usize) -> String {
    let (anchors, vocab) = if harmful {
        (HARMFUL_ANCHORS, HARMFUL_WORDS)
    } else {
        (BENIGN_ANCHORS, BENIGN_WORDS)
    };
    let mut words: Vec<&str> = vec![anchors[rng.random_range(0..anchors.len())]];
    words.extend(sample(rng, vocab.len(), class_words).into_iter().map(|i| vocab[i]));
    let neutral = rng.random_range(2..=4);
    words.extend(sample(rng, NEUTRAL_WORDS.len(), neutral).into_iter().map(|i| NEUTRAL_WORDS[i]));
    words.shuffle(rng);
    let mut text = words.join(" ");
    if let Some(first) = text.get(..1) {
        text = first.to_uppercase() + &text[1..];
    }
    text.push(if harmful { '!' } else { '.' });
    text
}

fn unique_text(rng: &mut ChaCha8Rng, seen: &mut BTreeSet<String>, harmful: bool, words: usize) -> String {
    loop {
        let t = compose(rng, harmful, words);
        if seen.insert(t.clone()) {
            return t;
        }
    }
}

/// Labelled training texts: 50 harmful, 70 not harmful.
pub fn training_texts(seed: u64) -> Vec<LabeledText> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_696e);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for i in 0..120 {
        let harmful = i < 50;
        let words = rng.random_range(3..=4);
        out.push(LabeledText {
            post_id: PostId::new(format!("train-{i:03}")),
            text: unique_text(&mut rng, &mut seen, harmful, words),
            label: if harmful { Label::Harmful } else { Label::NotHarmful },
        });
    }
    out
}

pub fn train_reference_model(texts: &[LabeledText]) -> Result<HateModel, ExperimentError> {
    let provider = HashedBagOfWords::default();
    let examples = embed_labeled(texts, &provider)?;
    Ok(train(&examples, &crate::classifier::EmbeddingProvider::tag(&provider), &TrainConfig::default())?)
}

pub fn fixture_query() -> String {
    build_query(&QuerySpec::harmful_polish()).expect("static query is valid")
}

fn warsaw(y: i32, m: u32, d: u32) -> Timestamp {
    chrono_tz::Europe::Warsaw
        .with_ymd_and_hms(y, m, d, 0, 0, 0)
        .single()
        .expect("unambiguous midnight")
        .to_utc()
}

/// First and last instant of the simulated response period.
pub fn fixture_period() -> (Timestamp, Timestamp) {
    (warsaw(2023, 8, 24), warsaw(2023, 9, 20) - Duration::seconds(1))
}

/// Expected outcomes of replaying the fixture, written next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureExpectations {
    pub corpus_size: usize,
    pub planted_harmful: Vec<PostId>,
    pub cg_mean: f64,
    pub eg_mean: f64,
    pub stratum_cg: Vec<PostId>,
    pub stratum_eg: Vec<PostId>,
    pub experiment_seed: u64,
}

#[derive(Debug, Clone)]
pub struct ReplayFixture {
    pub corpus: Vec<CorpusEntry>,
    pub training: Vec<LabeledText>,
    pub model: HateModel,
    pub articles: ArticleStore,
    pub fewshot: FewShotSet,
    pub query: String,
    pub expectations: FixtureExpectations,
}

fn point(at: Timestamp, likes: i64, impressions: i64, replies: i64) -> TrajectoryPoint {
    let nn = |v: i64| u64::try_from(v).expect("non-negative counter");
    TrajectoryPoint {
        taken_at: at,
        likes: nn(likes),
        impressions: nn(impressions),
        replies: nn(replies),
    }
}

/// Counters at creation and two days after detection.
fn trajectory(created: Timestamp, detected: Timestamp, start: (i64, i64, i64), delta: (i64, i64, i64)) -> Vec<TrajectoryPoint> {
    vec![
        point(created, start.0, start.1, start.2),
        point(detected + Duration::days(2), start.0 + delta.0, start.1 + delta.1, start.2 + delta.2),
    ]
}

/// Zero-sum offsets with spread, so the mean of `base + offset` is `base`.
fn offsets(n: usize) -> Vec<i64> {
    let mut out = Vec::with_capacity(n);
    if n % 2 == 1 {
        out.push(0);
    }
    let mut k = 0;
    while out.len() < n {
        let a = 10 + 15 * (k % 8 + 1);
        out.push(a);
        out.push(-a);
        k += 1;
    }
    out
}

const REJECT_CYCLE: [RejectionCode; 8] = [
    RejectionCode::NotHarmfulFalsePositive,
    RejectionCode::OffTopic,
    RejectionCode::NotHarmfulFalsePositive,
    RejectionCode::LowQuality,
    RejectionCode::ArticleMismatch,
    RejectionCode::NotHarmfulFalsePositive,
    RejectionCode::Controversial,
    RejectionCode::Hallucination,
];

const LINKED_REPLIES: &[(&str, usize)] = &[
    ("Ukraińcy pracują i płacą podatki, to miliardy dla budżetu. Sprawdź: ", 10),
    ("Emerytura po kilku dniach pracy to fałsz, zasady są te same dla wszystkich: ", 11),
    ("Co dziesiąta nowa firma w Polsce jest ukraińska, to nowe miejsca pracy: ", 17),
    ("Żadnego pierwszeństwa do żłobków nie ma, to nieprawda: ", 20),
];
const UNLINKED_REPLY: &str = "Ludzie uciekający przed wojną zasługują na szacunek. Większość z nich pracuje i sama się utrzymuje.";

/// Builds the replay fixture. The first pass replays the bare corpus to learn
/// which arm each planted post lands in; the second writes trajectories and
/// review scripts that put the target means on the analysis stratum.
pub fn generate_replay_fixture(corpus_seed: u64, experiment_seed: u64) -> Result<ReplayFixture, ExperimentError> {
    let schedule = ScheduleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(corpus_seed);
    let (from, to) = fixture_period();
    let windows = schedule.windows_between(from, to);

    let planted: BTreeSet<usize> = sample(&mut rng, CORPUS_SIZE, PLANTED_HARMFUL).into_iter().collect();
    let planted_replies: BTreeSet<usize> = planted.iter().copied().take(PLANTED_HARMFUL_REPLIES).collect();
    let mut seen = BTreeSet::new();
    let mut drafts = Vec::with_capacity(CORPUS_SIZE);
    for i in 0..CORPUS_SIZE {
        let harmful = planted.contains(&i);
        let window = windows[i * windows.len() / CORPUS_SIZE];
        let created = window - Duration::minutes(rng.random_range(10..=230));
        let words = rng.random_range(5..=6);
        let text = unique_text(&mut rng, &mut seen, harmful, words);
        let is_reply = if harmful {
            planted_replies.contains(&i)
        } else {
            rng.random_bool(0.25)
        };
        let start = (rng.random_range(0..15), rng.random_range(30..600), rng.random_range(0..6));
        let delta = (rng.random_range(0..60), rng.random_range(100..8000), rng.random_range(0..12));
        drafts.push((created, window, text, is_reply, harmful, start, delta, rng.random_range(0..300)));
    }
    drafts.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.2.cmp(&b.2)));

    let mut corpus = Vec::with_capacity(CORPUS_SIZE);
    let mut detected_at = BTreeMap::new();
    let mut planted_ids = Vec::new();
    for (n, (created, window, text, is_reply, harmful, start, delta, author)) in drafts.into_iter().enumerate() {
        let post_id = PostId::new(format!("post-{n:04}"));
        let parent_id = (is_reply && n > 0).then(|| PostId::new(format!("post-{:04}", n / 2)));
        if harmful {
            planted_ids.push(post_id.clone());
        }
        detected_at.insert(post_id.clone(), window);
        corpus.push(CorpusEntry {
            post_id,
            author_id: AuthorId::new(format!("user-{author:03}")),
            text,
            created_at: created,
            is_reply: parent_id.is_some(),
            parent_id,
            language_tag: "pl".into(),
            is_retweet: false,
            snapshots: trajectory(created, window, start, delta),
            sim: None,
        });
    }

    let training = training_texts(corpus_seed);
    let model = train_reference_model(&training)?;
    let mut articles = reference_articles();
    let provider = HashedBagOfWords::default();
    articles
        .embed_missing(&provider)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let fewshot = default_fewshot();
    let query = fixture_query();

    // Pass 1: learn the arms.
    let probe = Store::in_memory();
    let responder = Responder::new(articles.clone(), Some(fewshot.clone()));
    let inputs = |corpus: Vec<CorpusEntry>| ReplayInputs {
        schedule: schedule.clone(),
        query: query.clone(),
        seed: experiment_seed,
        model: &model,
        embedder: &provider,
        responder: &responder,
        corpus,
        reviewer: ReviewerId::from("fixture"),
    };
    let (outcome, _) = replay_corpus(&probe, inputs(corpus.clone()))?;
    let fetched: usize = outcome.windows.iter().map(|w| w.fetched).sum();
    let mut arms: Vec<(u64, PostId, Arm)> = probe.read(|s| {
        s.assignments
            .values()
            .map(|a| (a.draw, a.post_id.clone(), a.arm))
            .collect()
    });
    arms.sort();
    let assigned: BTreeSet<&PostId> = arms.iter().map(|(_, id, _)| id).collect();
    let expected: BTreeSet<&PostId> = planted_ids.iter().collect();
    if fetched != CORPUS_SIZE || assigned != expected {
        return Err(ExperimentError::Config(format!(
            "fixture probe mismatch: fetched {fetched} of {CORPUS_SIZE}, {} assigned vs {} planted, {} in common",
            assigned.len(),
            expected.len(),
            assigned.intersection(&expected).count()
        )));
    }

    // Pass 2: scripts and trajectories.
    let index: BTreeMap<PostId, usize> = corpus.iter().enumerate().map(|(i, e)| (e.post_id.clone(), i)).collect();
    let mut eg_posted = Vec::new();
    let mut cg_kept = Vec::new();
    let (mut eg_seen, mut cg_seen, mut rejections, mut linked) = (0usize, 0usize, 0usize, 0usize);
    for (_, id, arm) in &arms {
        let entry = &mut corpus[index[id]];
        let mut sim = SimScript::default();
        match arm {
            Arm::Experimental => {
                let j = eg_seen;
                eg_seen += 1;
                if j % 3 == 2 {
                    sim.review = Some(ScriptedDecision::Reject(REJECT_CYCLE[rejections % REJECT_CYCLE.len()]));
                    rejections += 1;
                } else if j == 1 {
                    sim.review = Some(ScriptedDecision::Expire);
                } else {
                    sim.review = Some(ScriptedDecision::Approve);
                    eg_posted.push(id.clone());
                }
                let text = if j % 4 == 3 {
                    UNLINKED_REPLY.to_owned()
                } else {
                    let (lead, article) = LINKED_REPLIES[linked % LINKED_REPLIES.len()];
                    linked += 1;
                    format!("{lead}{}", ARTICLES[article].3)
                };
                sim.reply_text = Some(text);
            }
            Arm::Control => {
                let j = cg_seen;
                cg_seen += 1;
                if j == 3 {
                    sim.review = Some(ScriptedDecision::Reject(RejectionCode::NotHarmfulFalsePositive));
                } else {
                    sim.review = Some(ScriptedDecision::Approve);
                    cg_kept.push(id.clone());
                }
            }
        }
        entry.sim = Some(sim);
    }

    let stratum = |ids: &[PostId], base: i64, replied: bool, corpus: &mut Vec<CorpusEntry>| -> Vec<PostId> {
        let originals: Vec<&PostId> = ids.iter().filter(|id| !corpus[index[*id]].is_reply).collect();
        let members: Vec<PostId> = originals.iter().skip(3).map(|id| (*id).clone()).collect();
        let offs = offsets(members.len());
        for (pos, id) in originals.iter().enumerate() {
            let e = &mut corpus[index[*id]];
            let w = detected_at[*id];
            let first_reply = pos % 5 == 0 || pos % 5 == 2;
            let start = (5 + pos as i64 % 7, 120 + 37 * pos as i64, if first_reply { 0 } else { 1 + pos as i64 % 4 });
            let m = 1 + pos as i64 % 5;
            let sim = e.sim.get_or_insert_with(SimScript::default);
            let (traj, counterfactual) = match pos {
                0 => {
                    sim.deleted_at = Some(w + Duration::days(3));
                    (trajectory(e.created_at, w, start, (10, 5000, 2)), None)
                }
                1 => (trajectory(e.created_at, w, start, (-2, 3000, 1)), None),
                2 => (trajectory(e.created_at, w, start, (0, 7, 0)), None),
                _ => {
                    let k = base + offs[pos - 3];
                    let cf_k = CG_BASE + offs[pos - 3];
                    (
                        trajectory(e.created_at, w, start, (k * m, E_SCALE * m, 3 * m)),
                        Some(trajectory(e.created_at, w, start, (cf_k * m, E_SCALE * m, m))),
                    )
                }
            };
            if replied {
                sim.replied_snapshots = traj;
                if let Some(cf) = counterfactual {
                    e.snapshots = cf;
                }
            } else {
                e.snapshots = traj;
            }
        }
        members
    };
    let stratum_eg = stratum(&eg_posted, EG_BASE, true, &mut corpus);
    let stratum_cg = stratum(&cg_kept, CG_BASE, false, &mut corpus);
    if stratum_eg.len() < 6 || stratum_cg.len() < 6 {
        return Err(ExperimentError::Config(format!(
            "stratum too small: {} experimental, {} control",
            stratum_eg.len(),
            stratum_cg.len()
        )));
    }

    Ok(ReplayFixture {
        corpus,
        training,
        model,
        articles,
        fewshot,
        query,
        expectations: FixtureExpectations {
            corpus_size: CORPUS_SIZE,
            planted_harmful: planted_ids,
            cg_mean: TARGET_CG_MEAN,
            eg_mean: TARGET_EG_MEAN,
            stratum_cg,
            stratum_eg,
            experiment_seed,
        },
    })
}

pub const FIXTURE_FILES: &[&str] = &[
    "corpus.jsonl",
    "training.jsonl",
    "model.json",
    "articles.json",
    "fewshot.json",
    "query.txt",
    "experiment.conf",
    "expectations.json",
];

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("serializable") + "\n")
        .collect()
}

fn without_embeddings(store: &ArticleStore) -> ArticleStore {
    let bare = store
        .articles()
        .iter()
        .map(|a| Article {
            embedding: None,
            ..a.clone()
        })
        .collect();
    ArticleStore::new(bare).expect("already validated")
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

impl ReplayFixture {
    /// File name and contents for every fixture file.
    pub fn render(&self) -> Vec<(&'static str, String)> {
        let config = format!(
            "# replay fixture\nseed = {}\nstore = store.jsonl\nmodel = model.json\narticles = articles.json\nfewshot = fewshot.json\nquery = query.txt\ncorpus = corpus.jsonl\n",
            self.expectations.experiment_seed
        );
        vec![
            ("corpus.jsonl", jsonl(&self.corpus)),
            ("training.jsonl", jsonl(&self.training)),
            ("model.json", pretty(&self.model)),
            ("articles.json", pretty(&without_embeddings(&self.articles))),
            ("fewshot.json", pretty(&self.fewshot.pairs())),
            ("query.txt", format!("{}\n", self.query)),
            ("experiment.conf", config),
            ("expectations.json", pretty(&self.expectations)),
        ]
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in self.render() {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}
