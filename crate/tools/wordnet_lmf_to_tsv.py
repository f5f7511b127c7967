#!/usr/bin/env python3
"""Compile a WordNet LMF XML release into the lexicon table used by `shuffle-gen`.

Output lines: lemma<TAB>pos<TAB>related/pos,related/pos,...
where related forms come from `derivation` sense relations.

    python3 tools/wordnet_lmf_to_tsv.py english-wordnet-2020.xml > lexicon.tsv
"""

import argparse
import sys
import xml.etree.ElementTree as ET
from collections import defaultdict

POS_CODES = {"n", "v", "a", "s", "r"}


def compile_lexicon(path):
    sense_owner = {}
    derivations = []
    heads = set()
    for _, elem in ET.iterparse(path, events=("end",)):
        if elem.tag != "LexicalEntry":
            continue
        lemma = elem.find("Lemma")
        if lemma is None:
            elem.clear()
            continue
        form = lemma.get("writtenForm", "").strip().lower()
        pos = lemma.get("partOfSpeech", "")
        if pos == "s":
            pos = "a"
        if not form or pos not in POS_CODES:
            elem.clear()
            continue
        heads.add((form, pos))
        for sense in elem.findall("Sense"):
            sense_owner[sense.get("id")] = (form, pos)
            for rel in sense.findall("SenseRelation"):
                if rel.get("relType") == "derivation":
                    derivations.append(((form, pos), rel.get("target")))
        elem.clear()

    related = defaultdict(set)
    for head, target in derivations:
        other = sense_owner.get(target)
        if other is not None and other != head:
            related[head].add(other)
    return heads, related


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("lmf_xml")
    ap.add_argument("-o", "--output", help="write here instead of stdout")
    args = ap.parse_args()

    heads, related = compile_lexicon(args.lmf_xml)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    with out:
        for form, pos in sorted(heads):
            if "\t" in form:
                continue
            rel = ",".join(f"{l}/{p}" for l, p in sorted(related[(form, pos)]))
            out.write(f"{form}\t{pos}\t{rel}\n")
    print(f"{len(heads)} entries, {sum(1 for h in heads if related[h])} with relations", file=sys.stderr)


if __name__ == "__main__":
    main()
