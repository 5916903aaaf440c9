import init, { temporalCurve, decompose, interaction } from "./pkg/tidformer_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

function show(id, text, failed = false) {
  const el = $(id);
  el.textContent = text;
  el.classList.toggle("error", failed);
}

function guarded(out, fn) {
  return () => {
    try {
      fn();
    } catch (e) {
      show(out, String(e.message ?? e), true);
    }
  };
}

function plot(canvas, xs, series, lo, hi) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 24;
  ctx.clearRect(0, 0, w, h);
  const x = (v) => pad + ((v - xs[0]) / (xs[xs.length - 1] - xs[0] || 1)) * (w - 2 * pad);
  const y = (v) => h - pad - ((v - lo) / (hi - lo || 1)) * (h - 2 * pad);
  ctx.strokeStyle = "#bbb";
  ctx.beginPath();
  ctx.moveTo(pad, y(0));
  ctx.lineTo(w - pad, y(0));
  ctx.stroke();
  series.forEach(({ values, label, step }, k) => {
    ctx.strokeStyle = colors[k % colors.length];
    ctx.beginPath();
    values.forEach((v, i) => {
      if (i === 0) ctx.moveTo(x(xs[i]), y(v));
      else if (step) {
        ctx.lineTo(x(xs[i]), y(values[i - 1]));
        ctx.lineTo(x(xs[i]), y(v));
      } else ctx.lineTo(x(xs[i]), y(v));
    });
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(label, w - pad - 90, pad + 12 * k);
  });
}

function runTemporal() {
  const r = JSON.parse(temporalCurve(num("mte-dt"), num("mte-alpha"), num("mte-beta"), num("mte-hours"), 400));
  const series = r.components.map(([j, values]) => ({ values, label: `cos ω${j}·Δt` }));
  plot($("mte-plot"), r.hours, series, -1, 1);
  const flips = r.hours.filter((_, i) => i > 0 && r.buckets[i] !== r.buckets[i - 1]);
  show("mte-out", `weekly bucket changes at hours: ${flips.map((h) => h.toFixed(1)).join(", ") || "none"}`);
}

function runSeasonal() {
  const r = JSON.parse(decompose($("ste-ids").value, num("ste-nodes"), num("ste-window")));
  const xs = r.signal.map((_, i) => i);
  const all = [...r.signal, ...r.seasonal, ...r.trend];
  plot($("ste-plot"), xs, [
    { values: r.signal, label: "signal", step: true },
    { values: r.trend, label: "trend" },
    { values: r.seasonal, label: "seasonal" },
  ], Math.min(...all), Math.max(...all));
  const fmt = (v) => v.map((x) => x.toFixed(4)).join(" ");
  show("ste-out", `signal   ${fmt(r.signal)}\ntrend    ${fmt(r.trend)}\nseasonal ${fmt(r.seasonal)}\nseasonal + trend == signal bit for bit: ${r.exact}`);
}

function runInteraction() {
  const r = JSON.parse(interaction(
    num("bie-src"), $("bie-src-win").value,
    num("bie-tgt"), $("bie-tgt-win").value,
    $("bie-src-dict").value, $("bie-tgt-dict").value,
  ));
  const pairs = (c) => c.map(([a, b]) => `[${a},${b}]`).join(" ");
  show("bie-out", `rebuilt source window  ${r.src_new.join(" ")}\nrebuilt target window  ${r.tgt_new.join(" ")}\nsource token counts     ${pairs(r.src_counts)}\ntarget token counts     ${pairs(r.tgt_counts)}`);
}

await init();
for (const [button, out, fn] of [["mte-run", "mte-out", runTemporal], ["ste-run", "ste-out", runSeasonal], ["bie-run", "bie-out", runInteraction]]) {
  const run = guarded(out, fn);
  $(button).addEventListener("click", run);
  run();
}
