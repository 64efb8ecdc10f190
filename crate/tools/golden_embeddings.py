#!/usr/bin/env python3
"""Independent reference for the hashed text embedding, the two-round
mean-aggregation subgraph encoder and the retrieval context of the R1 record
over kg_mini. Writes the golden files the Rust tests compare against.

    python3 tools/golden_embeddings.py
"""
import json
import math
import pathlib
import struct

DIM = 256
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK = (1 << 64) - 1

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures" / "golden"


def tokens(text):
    out, cur = [], None
    for ch in text:
        if ch.isalnum():
            cur = (cur or "") + ch.lower()
        elif ch == "#":
            if cur and cur != "#":
                out.append(cur)
            cur = "#"
        else:
            if cur and cur != "#":
                out.append(cur)
            cur = None
    if cur and cur != "#":
        out.append(cur)
    return out


def fnv1a(data):
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK
    return h


def normalize(v):
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v] if n > 0 else [0.0] * DIM


def embed(text):
    v = [0.0] * DIM
    for t in tokens(text):
        h = fnv1a(t.encode("utf-8"))
        v[h % DIM] += -1.0 if (h >> 63) & 1 else 1.0
    return normalize(v)


def encode(nodes, edges):
    """nodes: {id: text}; edges: [(a, b)] treated as undirected."""
    if not nodes:
        return [0.0] * DIM
    ids = sorted(nodes)
    state = {i: embed(nodes[i]) for i in ids}
    nbrs = {i: set() for i in ids}
    for a, b in edges:
        if a in nbrs and b in nbrs and a != b:
            nbrs[a].add(b)
            nbrs[b].add(a)
    for _ in range(2):
        nxt = {}
        for i in ids:
            if not nbrs[i]:
                nxt[i] = state[i]
                continue
            ns = sorted(nbrs[i])
            mean = [sum(state[j][k] for j in ns) / len(ns) for k in range(DIM)]
            nxt[i] = normalize([0.5 * state[i][k] + 0.5 * mean[k] for k in range(DIM)])
        state = nxt
    mean = [sum(state[i][k] for i in ids) / len(ids) for k in range(DIM)]
    return normalize(mean)


def write_vectors(stem, labelled):
    with (OUT / f"{stem}.bin").open("wb") as fh:
        for _, vec in labelled:
            fh.write(struct.pack("<256d", *vec))
    (OUT / f"{stem}.txt").write_text("".join(label + "\n" for label, _ in labelled), encoding="utf-8")


SAFETY_RELATIONS = {"has_dose_rule", "cross_reactive", "interacts_with", "contraindicated_in"}

R1_TEXT = " ".join([
    "Swelling and pain near tooth #85 for three days.",
    "Fever present. Sinus tract on the buccal gingiva. No trismus.",
    "Periapical radiolucency at #85.",
])


def cosine(a, b):
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    dot = sum(x * y for x, y in zip(a, b))
    return max(-1.0, min(1.0, dot / (na * nb)))


def lexical(node):
    return " ".join([node["name"], *node["synonyms"]])


def context(kg_path, text, k=10, m=3, alpha=0.5):
    nodes, edges = {}, []
    for line in kg_path.read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        if "node" in rec:
            nodes[rec["node"]["id"]] = rec["node"]
        else:
            edges.append(rec["edge"])
    h_x = embed(text)
    q_tokens = set(tokens(text))
    scored = []
    for nid, node in nodes.items():
        if node["kind"] == "GuidelinePassage":
            continue
        lex = lexical(node)
        t = set(tokens(lex))
        union = len(t | q_tokens)
        jac = len(t & q_tokens) / union if union else 0.0
        scored.append((-(0.7 * cosine(embed(lex), h_x) + 0.3 * jac + 0.0), nid))
    scored.sort()
    top = [(nid, -neg) for neg, nid in scored[:k]]
    members = {nid for nid, _ in top}
    drugs = {nid for nid in members if nodes[nid]["kind"] == "Drug"}
    frag = [
        (e["src"], e["dst"]) for e in edges
        if (e["src"] in members and e["dst"] in members)
        or (e["rel"] in SAFETY_RELATIONS and (e["src"] in drugs or e["dst"] in drugs))
    ]
    h_g = encode({nid: lexical(nodes[nid]) for nid in members}, frag)
    h_star = normalize([alpha * x + (1 - alpha) * g for x, g in zip(h_x, h_g)])
    hits = sorted(
        (-(cosine(h_star, embed(n["attrs"]["text"])) + 0.0), nid)
        for nid, n in nodes.items() if n["kind"] == "GuidelinePassage"
    )[:m]
    lines = [{"kind": "node", "id": nid, "score": s} for nid, s in top]
    lines += [{"kind": "passage", "id": nid, "similarity": -neg} for neg, nid in hits]
    return lines


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    texts = [
        "periapical abscess",
        "Pain near tooth #85.",
        "acute swelling near tooth #85",
        "amoxicillin amoxicillin clindamycin",
    ]
    write_vectors("embeddings", [(t, embed(t)) for t in texts])
    path_nodes = {
        "a": "swelling swollen",
        "b": "periapical abscess dental abscess apical abscess",
        "c": "amoxicillin amox amoxil",
    }
    write_vectors("path_graph", [("a-b-c", encode(path_nodes, [("a", "b"), ("b", "c")]))])
    lines = context(OUT.parent / "kg_mini.jsonl", R1_TEXT)
    (OUT / "context_r1.jsonl").write_text(
        "".join(json.dumps(line, separators=(",", ":")) + "\n" for line in lines), encoding="utf-8"
    )
    print("golden files written to", OUT)
