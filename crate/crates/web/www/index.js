import init, { check, explain, compare, examples } from "./pkg/aapp_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = { app: "#d62728", anti_affinity: "#ff7f0e", aapp: "#2ca02c" };

function show(id, json) {
  $(id).textContent = JSON.stringify(JSON.parse(json), null, 2);
}

function table(rows) {
  const cols = ["mean_ms", "median_ms", "p95_ms", "total_retries", "requests_with_retries", "colocation_fraction", "fast_fraction"];
  const head = "<tr><th>policy</th>" + cols.map((c) => `<th>${c}</th>`).join("") + "</tr>";
  const body = rows
    .map((r) => `<tr><th>${r.name}</th>` + cols.map((c) => `<td>${Number(r[c]).toFixed(c.endsWith("fraction") ? 3 : 0)}</td>`).join("") + "</tr>")
    .join("");
  $("compare-table").innerHTML = `<table>${head}${body}</table>`;
}

// Latency (x, log scale) against percentile of invocations (y).
function plot(rows) {
  const cv = $("plot");
  const g = cv.getContext("2d");
  const pad = 50;
  const w = cv.width - 2 * pad;
  const h = cv.height - 2 * pad;
  g.clearRect(0, 0, cv.width, cv.height);
  const all = rows.flatMap((r) => r.latencies).filter((x) => x > 0);
  if (all.length === 0) return;
  const lo = Math.log10(Math.min(...all));
  const hi = Math.log10(Math.max(...all)) + 1e-9;
  const x = (ms) => pad + ((Math.log10(Math.max(ms, 1)) - lo) / (hi - lo || 1)) * w;
  const y = (p) => pad + h - (p / 100) * h;

  g.strokeStyle = "#999";
  g.strokeRect(pad, pad, w, h);
  g.fillStyle = "#444";
  g.font = "12px sans-serif";
  for (let p = 0; p <= 100; p += 25) g.fillText(`${p}%`, 10, y(p) + 4);
  for (let e = Math.ceil(lo); e <= Math.floor(hi); e++) {
    g.fillText(`${10 ** e} ms`, x(10 ** e) - 15, pad + h + 18);
  }

  rows.forEach((r, k) => {
    const n = r.latencies.length;
    g.strokeStyle = COLORS[r.name] || "#1f77b4";
    g.lineWidth = 2;
    g.beginPath();
    r.latencies.forEach((ms, i) => {
      const px = x(ms);
      const py = y((100 * (i + 1)) / n);
      i === 0 ? g.moveTo(px, py) : g.lineTo(px, py);
    });
    g.stroke();
    g.fillStyle = g.strokeStyle;
    g.fillText(r.name, pad + 10, pad + 16 + 16 * k);
  });
}

await init();
const ex = JSON.parse(examples());
$("script").value = ex.script;
$("cluster").value = ex.cluster;
$("registry").value = ex.registry;
$("state").value = ex.state;
$("function").value = ex.function;

$("check").onclick = () => show("check-out", check($("script").value, $("cluster").value));
$("explain").onclick = () =>
  show(
    "explain-out",
    explain($("script").value, $("cluster").value, $("registry").value, $("state").value, $("function").value, BigInt($("explain-seed").value || 0)),
  );
$("compare").onclick = () => {
  const res = JSON.parse(
    compare(Number($("runs").value), BigInt($("delay").value), Number($("slowdown").value), BigInt($("sim-seed").value || 0)),
  );
  if (!res.ok) {
    $("compare-table").textContent = res.error;
    return;
  }
  table(res.rows);
  plot(res.rows);
};
