#!/usr/bin/env python3
"""Regenerates data/tiny_kb, the ~50k-word corpus used by the acceptance run.

Deterministic: a fixed seed drives every word, so re-running this script
reproduces the corpus byte for byte.
"""
import random
from pathlib import Path

SEED = 20240817
OUT = Path(__file__).resolve().parent.parent / "data" / "tiny_kb"

TOPICS = {
    "harbor": {
        "nouns": ["lighthouse", "breakwater", "ferry", "quay", "tide", "pilot", "beacon",
                  "mooring", "cargo", "manifest", "dredger", "channel", "buoy", "keeper"],
        "verbs": ["rebuilt", "surveyed", "anchored", "signalled", "charted", "repaired",
                  "inspected", "logged", "towed", "dredged"],
        "adjs": ["granite", "northern", "seasonal", "shallow", "restored", "foggy",
                 "maritime", "tidal"],
    },
    "orchard": {
        "nouns": ["cider", "press", "grafting", "rootstock", "harvest", "barrel", "blossom",
                  "pollinator", "windbreak", "storehouse", "ladder", "crate", "orchardist"],
        "verbs": ["pruned", "grafted", "pressed", "fermented", "harvested", "planted",
                  "thinned", "stored", "sorted", "shipped"],
        "adjs": ["heritage", "late-season", "frost-hardy", "walled", "terraced", "sunlit",
                 "biennial", "dwarf"],
    },
    "railway": {
        "nouns": ["timetable", "viaduct", "signalbox", "locomotive", "siding", "gauge",
                  "junction", "platform", "tender", "turntable", "freight", "embankment"],
        "verbs": ["rerouted", "electrified", "scheduled", "coupled", "shunted", "surveyed",
                  "widened", "maintained", "signalled", "extended"],
        "adjs": ["narrow-gauge", "double-track", "rural", "steep", "wartime", "branch",
                 "overnight", "municipal"],
    },
}

CONNECTIVES = ["meanwhile", "afterwards", "consequently", "records show", "by contrast",
               "in later years", "under the new charter", "according to the ledger"]
NAMES = ["Aldermoor", "Brackenford", "Caldwick", "Dunmere", "Easthaven", "Farrowgate",
         "Glenholm", "Harperfield", "Ivybridge", "Kestrelwood"]


def sentence(rng, vocab):
    year = rng.randint(1820, 1960)
    name = rng.choice(NAMES)
    n1, n2 = rng.sample(vocab["nouns"], 2)
    v = rng.choice(vocab["verbs"])
    adj = rng.choice(vocab["adjs"])
    forms = [
        f"The {adj} {n1} at {name} was {v} in {year}.",
        f"In {year} the {name} council {v} the {n1} beside the {n2}.",
        f"{rng.choice(CONNECTIVES).capitalize()}, the {n1} {v} near {name} served the {adj} {n2}.",
        f"A {adj} {n2} was {v} at {name} after the {n1} failed in {year}.",
        f"The {n1} of {name} carried {rng.randint(2, 90)} {n2} loads during the {adj} season of {year}.",
    ]
    return rng.choice(forms)


def paragraph(rng, vocab, n_sentences):
    return " ".join(sentence(rng, vocab) for _ in range(n_sentences))


def main():
    rng = random.Random(SEED)
    total_words = 0
    for topic, vocab in TOPICS.items():
        for doc in range(8):
            parts = [paragraph(rng, vocab, rng.randint(6, 10)) for _ in range(rng.randint(20, 28))]
            text = "\n\n".join(parts) + "\n"
            path = OUT / topic / f"{topic}_{doc:02d}.txt"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            total_words += len(text.split())
    print(f"wrote {total_words} words under {OUT}")


if __name__ == "__main__":
    main()
