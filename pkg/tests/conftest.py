import json
from pathlib import Path

import pytest

from clqa.corpus import Passage, QAPair

# Appendix example: 7 generated pairs, the first, second, third, sixth and
# seventh of which survive filtering.
APPENDIX_PAIRS = [
    ("When was an American in Paris written?", "1928", "Number"),
    ("When did George Gershwin write an American in Paris?", "the 1920s", "ContainsNumber"),
    ('Who was the conductor of "An American in Paris"?', "Walter Damrosch", "Who"),
    ("What was the name of the instrument that Gershwin scored for?", "automobile horns", None),
    ("What was the name of the orchestral piece Gershwin composed in 1928?", "New York Philharmonic", None),
    ('When did Gershwin complete the orchestration of "An American in Paris"?', "November 18", "Date"),
    ("Who did Gershwin collaborate on the original program notes with?", "Deems Taylor", "Who"),
]

EN_TOPICS = [
    ("lego", "The Lego Group began manufacturing interlocking toy bricks in Billund."),
    ("gershwin", "George Gershwin wrote An American in Paris after visiting France."),
    ("volcano", "Mount Etna is an active stratovolcano on the east coast of Sicily."),
    ("penguin", "Emperor penguins breed during the harsh Antarctic winter on sea ice."),
    ("coffee", "Coffee plants were first cultivated on the Arabian peninsula in Yemen."),
    ("tesla", "Nikola Tesla designed the alternating current induction motor."),
    ("nile", "The Nile river flows north through eleven countries into the Mediterranean."),
    ("chess", "Magnus Carlsen became world chess champion by defeating Viswanathan Anand."),
    ("saturn", "Saturn has a prominent ring system made mostly of water ice particles."),
    ("violin", "Antonio Stradivari crafted violins in the Italian town of Cremona."),
]
JA_TOPICS = [
    ("fuji", "富士山は日本で最も高い山です。静岡県と山梨県にまたがっています。"),
    ("sushi", "寿司は酢飯と魚を組み合わせた日本料理です。江戸時代に広まりました。"),
    ("kyoto", "京都は千年以上にわたり日本の首都でした。多くの寺院があります。"),
    ("shinkansen", "新幹線は一九六四年に東京と大阪の間で開業しました。"),
    ("sakura", "桜は春に咲く花です。花見は人気のある行事です。"),
]


def toy_corpus(n: int = 50) -> list[Passage]:
    """Bilingual en/ja corpus; every passage has a distinctive topic sentence."""
    out = []
    for i in range(n):
        if i % 5 == 4:
            key, text = JA_TOPICS[(i // 5) % len(JA_TOPICS)]
            out.append(Passage(f"ja-{i:03d}", "ja", key, f"{text}番号{i}です。"))
        else:
            key, text = EN_TOPICS[i % len(EN_TOPICS)]
            out.append(Passage(f"en-{i:03d}", "en", key, f"{text} Record {i} mentions token{i}."))
    return out


def toy_questions(passages: list[Passage]) -> list[QAPair]:
    qs = []
    for p in passages[:20]:
        if p.lang == "en":
            q = f"Which record mentions token{p.id[3:].lstrip('0') or '0'}?"
            a = f"token{int(p.id[3:])}"
        else:
            q = f"番号{int(p.id[3:])}の記事は何ですか？"
            a = f"番号{int(p.id[3:])}"
        qs.append(QAPair(f"q-{p.id}", q, a, p.lang, source_passage_id=p.id))
    return qs


def template_pairs(passage: Passage) -> list[QAPair]:
    """Trivial pair generator for fixtures: the passage's last word is the answer."""
    answer = passage.text.split()[-1].strip(".,")
    return [
        QAPair(
            f"{passage.id}-tpl",
            f"Which token closes the {passage.title} record?",
            answer,
            "en",
            source_passage_id=passage.id,
        )
    ]


def write_jsonl(path: Path, records) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def corpus50():
    return toy_corpus(50)
