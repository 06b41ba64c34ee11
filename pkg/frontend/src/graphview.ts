// Cosmetic force-directed layout over nodes/edges the API returned.
// Deterministic (seeded golden-angle start, fixed iteration count) so the
// same data always draws the same picture; positions carry no meaning.

import type { NodeRef, PropagationPath } from "./types.js";
import { ROLE_COLORS, escapeHtml } from "./views.js";

export interface GraphModel {
  nodes: NodeRef[];
  links: { source: string; target: string; relation: string }[];
}

export function modelFromPaths(paths: PropagationPath[]): GraphModel {
  const nodes = new Map<string, NodeRef>();
  const links: GraphModel["links"] = [];
  const seen = new Set<string>();
  for (const path of paths) {
    for (const n of path.nodes) nodes.set(n.id, n);
    for (let i = 0; i + 1 < path.nodes.length; i++) {
      const relation = path.relations[i] ?? "LEADS_TO"; // server names every hop
      const key = `${path.nodes[i].id}>${path.nodes[i + 1].id}`;
      if (!seen.has(key)) {
        seen.add(key);
        links.push({ source: path.nodes[i].id, target: path.nodes[i + 1].id, relation });
      }
    }
  }
  return { nodes: [...nodes.values()], links };
}

export interface Point {
  x: number;
  y: number;
}

export function forceLayout(model: GraphModel, width = 720, height = 480,
                            iterations = 120): Map<string, Point> {
  const pos = new Map<string, Point>();
  const n = model.nodes.length;
  model.nodes.forEach((node, i) => {
    // golden-angle spiral: deterministic, reasonably spread
    const r = 40 + 180 * Math.sqrt((i + 1) / Math.max(n, 1));
    const a = i * 2.399963229728653;
    pos.set(node.id, { x: width / 2 + r * Math.cos(a), y: height / 2 + r * Math.sin(a) });
  });
  const k = Math.sqrt((width * height) / Math.max(n, 1)) * 0.5;
  for (let it = 0; it < iterations; it++) {
    const disp = new Map<string, Point>();
    for (const node of model.nodes) disp.set(node.id, { x: 0, y: 0 });
    for (let i = 0; i < n; i++) {
      for (let j = i + 1; j < n; j++) {
        const a = pos.get(model.nodes[i].id)!;
        const b = pos.get(model.nodes[j].id)!;
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        const d2 = Math.max(dx * dx + dy * dy, 1);
        const f = (k * k) / d2;
        dx *= f;
        dy *= f;
        const da = disp.get(model.nodes[i].id)!;
        const db = disp.get(model.nodes[j].id)!;
        da.x += dx; da.y += dy;
        db.x -= dx; db.y -= dy;
      }
    }
    for (const link of model.links) {
      const a = pos.get(link.source)!;
      const b = pos.get(link.target)!;
      const dx = b.x - a.x;
      const dy = b.y - a.y;
      const d = Math.max(Math.sqrt(dx * dx + dy * dy), 1);
      const f = (d - k) / d * 0.05;
      const da = disp.get(link.source)!;
      const db = disp.get(link.target)!;
      da.x += dx * f; da.y += dy * f;
      db.x -= dx * f; db.y -= dy * f;
    }
    const temp = 10 * (1 - it / iterations);
    for (const node of model.nodes) {
      const p = pos.get(node.id)!;
      const d = disp.get(node.id)!;
      const len = Math.max(Math.sqrt(d.x * d.x + d.y * d.y), 1e-9);
      p.x += (d.x / len) * Math.min(len, temp);
      p.y += (d.y / len) * Math.min(len, temp);
      p.x = Math.min(width - 20, Math.max(20, p.x));
      p.y = Math.min(height - 20, Math.max(20, p.y));
    }
  }
  return pos;
}

export function renderSvg(model: GraphModel, width = 720, height = 480): string {
  const pos = forceLayout(model, width, height);
  const edges = model.links.map((l) => {
    const a = pos.get(l.source)!;
    const b = pos.get(l.target)!;
    const color = ROLE_COLORS[l.relation] ?? "#2c3e50";
    return `<line x1="${a.x.toFixed(1)}" y1="${a.y.toFixed(1)}" ` +
      `x2="${b.x.toFixed(1)}" y2="${b.y.toFixed(1)}" stroke="${color}" stroke-width="1.5"/>`;
  }).join("");
  const nodes = model.nodes.map((n) => {
    const p = pos.get(n.id)!;
    return `<g class="node" data-node-id="${escapeHtml(n.id)}">` +
      `<circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="7" fill="#2c3e50"/>` +
      `<text x="${(p.x + 10).toFixed(1)}" y="${(p.y + 4).toFixed(1)}">${escapeHtml(n.text)}</text></g>`;
  }).join("");
  return `<svg viewBox="0 0 ${width} ${height}" xmlns="http://www.w3.org/2000/svg">` +
    edges + nodes + `</svg>`;
}
