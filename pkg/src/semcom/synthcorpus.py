"""Deterministic template-grammar corpus generator.

Stands in for a large parliamentary-style corpus at desk scale: sentences
are 4-16 words drawn from a few hundred word types, so a small transceiver
can actually learn the language while evaluation still sees unseen word
combinations. Two disjoint content-word banks support knowledge-transfer
experiments.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

_CORE = {
    "det": ["the", "a", "every", "this", "that"],
    "adj": ["old", "new", "quiet", "busy", "tired", "young", "small", "large",
            "careful", "bright", "slow", "fast", "clean", "broken", "local",
            "famous", "hungry", "patient", "curious", "gentle"],
    "noun": ["engineer", "student", "teacher", "doctor", "farmer", "pilot",
             "writer", "painter", "driver", "nurse", "chef", "sailor",
             "radio", "engine", "letter", "report", "signal", "message",
             "garden", "window", "bridge", "machine", "ticket", "camera",
             "bottle", "basket", "mirror", "journal", "package", "antenna"],
    "vt": ["checked", "repaired", "carried", "painted", "watched", "opened",
           "closed", "cleaned", "studied", "described", "delivered", "found",
           "followed", "measured", "tested", "moved", "borrowed", "signed",
           "counted", "collected"],
    "vi": ["arrived", "waited", "slept", "worked", "rested", "smiled",
           "listened", "traveled", "returned", "paused", "hurried", "stayed"],
    "adv": ["slowly", "quickly", "carefully", "quietly", "early", "late",
            "together", "alone", "again", "twice", "often", "rarely"],
    "place": ["station", "market", "harbor", "library", "office", "village",
              "workshop", "kitchen", "airport", "museum", "factory", "school"],
    "time": ["yesterday", "today", "afterwards", "eventually", "meanwhile",
             "recently", "finally", "suddenly"],
}

_ALT = {
    "det": ["the", "a", "every", "this", "that"],
    "adj": ["ancient", "modern", "silent", "crowded", "weary", "junior",
            "tiny", "huge", "cautious", "shiny", "sluggish", "rapid",
            "tidy", "cracked", "nearby", "renowned", "starving", "calm",
            "eager", "tender"],
    "noun": ["geologist", "violinist", "banker", "surgeon", "shepherd",
             "captain", "poet", "sculptor", "courier", "midwife", "baker",
             "fisherman", "telescope", "turbine", "parcel", "memo",
             "beacon", "bulletin", "orchard", "doorway", "tunnel",
             "apparatus", "voucher", "lens", "flask", "crate", "prism",
             "ledger", "bundle", "mast"],
    "vt": ["inspected", "rebuilt", "hauled", "sketched", "observed",
           "unlocked", "sealed", "scrubbed", "reviewed", "annotated",
           "dispatched", "located", "tracked", "weighed", "verified",
           "shifted", "loaned", "stamped", "tallied", "gathered"],
    "vi": ["landed", "lingered", "dozed", "labored", "relaxed", "grinned",
           "attended", "voyaged", "reappeared", "hesitated", "rushed",
           "remained"],
    "adv": ["gradually", "swiftly", "precisely", "softly", "soon", "earlier",
            "jointly", "separately", "once", "thrice", "frequently",
            "seldom"],
    "place": ["terminal", "bazaar", "wharf", "archive", "bureau", "hamlet",
              "foundry", "pantry", "airstrip", "gallery", "mill", "academy"],
    "time": ["beforehand", "tonight", "thereafter", "ultimately", "presently",
             "lately", "lastly", "abruptly"],
}

BANKS = {"core": _CORE, "alt": _ALT}

_PREPS = ["near", "behind", "inside", "beside", "under", "toward"]
_CONJ = ["and", "while", "because", "before", "after"]


def _noun_phrase(rng, bank, with_adj_p=0.6):
    words = [rng.choice(bank["det"])]
    if rng.random() < with_adj_p:
        words.append(rng.choice(bank["adj"]))
    words.append(rng.choice(bank["noun"]))
    return words


def _clause(rng, bank):
    kind = rng.integers(0, 4)
    if kind == 0:  # NP Vt NP
        return _noun_phrase(rng, bank) + [rng.choice(bank["vt"])] + _noun_phrase(rng, bank)
    if kind == 1:  # NP Vt NP Adv
        return (_noun_phrase(rng, bank) + [rng.choice(bank["vt"])]
                + _noun_phrase(rng, bank) + [rng.choice(bank["adv"])])
    if kind == 2:  # NP Vi Prep Place
        return (_noun_phrase(rng, bank) + [rng.choice(bank["vi"]),
                rng.choice(_PREPS), rng.choice(bank["det"]),
                rng.choice(bank["place"])])
    # NP Vi Adv
    return _noun_phrase(rng, bank) + [rng.choice(bank["vi"]), rng.choice(bank["adv"])]


def generate_sentences(n: int, seed: int, bank: str = "core") -> list[str]:
    """n template-grammar sentences, 4-16 words each, fully seed-determined."""
    words = BANKS[bank]
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        sent = _clause(rng, words)
        if rng.random() < 0.25:
            sent = [rng.choice(words["time"])] + sent
        if rng.random() < 0.3:
            sent = sent + [rng.choice(_CONJ)] + _clause(rng, words)
        out.append(" ".join(sent) + ".")
    return out


def write_corpus(path, n: int, seed: int, bank: str = "core") -> Path:
    """Generate and write a corpus file, one sentence per line."""
    path = Path(path)
    path.write_text("\n".join(generate_sentences(n, seed, bank)) + "\n",
                    encoding="utf-8")
    return path


def bank_vocabulary_size(bank: str = "core") -> int:
    words = set(_PREPS) | set(_CONJ)
    for group in BANKS[bank].values():
        words.update(group)
    return len(words)
