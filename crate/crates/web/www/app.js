import init, { referenceDesign, theoryTable, mseCurve, simulate } from "./pkg/hhme_web.js";

const SLIDERS = ["W2", "k", "rho", "sigma_v2_sq"];
const $ = (id) => document.getElementById(id);
let design = {};

function fmt(x) {
  if (x === null || x === undefined) return "";
  return Math.abs(x) >= 1e5 || (x !== 0 && Math.abs(x) < 1e-3) ? x.toExponential(4) : x.toFixed(4);
}

function buildForm() {
  const box = $("params");
  for (const [key, value] of Object.entries(design)) {
    const label = document.createElement("label");
    label.textContent = key;
    const input = document.createElement("input");
    input.type = "number";
    input.step = "any";
    input.id = "p-" + key;
    input.value = value ?? "";
    input.addEventListener("input", () => {
      design[key] = input.value === "" ? null : Number(input.value);
      syncSliders();
      refresh();
    });
    label.appendChild(input);
    box.appendChild(label);
  }
  for (const key of SLIDERS) {
    $("s-" + key).addEventListener("input", (e) => {
      design[key] = Number(e.target.value);
      $("p-" + key).value = design[key];
      syncSliders();
      refresh();
    });
  }
  syncSliders();
}

function syncSliders() {
  for (const key of SLIDERS) {
    const slider = $("s-" + key);
    slider.value = design[key];
    slider.nextElementSibling.textContent = design[key];
  }
}

function fillTable(table, header, rows) {
  table.innerHTML = "";
  const head = table.insertRow();
  for (const h of header) {
    const th = document.createElement("th");
    th.textContent = h;
    head.appendChild(th);
  }
  for (const row of rows) {
    const tr = table.insertRow();
    for (const cell of row) tr.insertCell().textContent = typeof cell === "number" ? fmt(cell) : cell;
  }
}

function drawCurve(curve) {
  const c = $("curve");
  const ctx = c.getContext("2d");
  const pad = 45;
  ctx.clearRect(0, 0, c.width, c.height);
  const xs = curve.m2, ys = curve.mse;
  const xmin = xs[0], xmax = xs[xs.length - 1];
  const ymin = Math.min(...ys), ymax = Math.max(...ys);
  const px = (x) => pad + ((x - xmin) / (xmax - xmin)) * (c.width - 2 * pad);
  const py = (y) => c.height - pad - ((y - ymin) / (ymax - ymin || 1)) * (c.height - 2 * pad);

  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, c.width - 2 * pad, c.height - 2 * pad);
  ctx.fillStyle = "#333";
  ctx.font = "12px system-ui";
  ctx.fillText(fmt(ymax), 2, pad + 4);
  ctx.fillText(fmt(ymin), 2, c.height - pad);
  ctx.fillText(xmin.toFixed(2), pad - 10, c.height - pad + 16);
  ctx.fillText(xmax.toFixed(2), c.width - pad - 10, c.height - pad + 16);
  ctx.fillText("m2", c.width / 2, c.height - 8);

  ctx.strokeStyle = "#1f5fbf";
  ctx.lineWidth = 2;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ys[i])) : ctx.moveTo(px(x), py(ys[i]))));
  ctx.stroke();

  if (curve.m2_opt >= xmin && curve.m2_opt <= xmax) {
    ctx.strokeStyle = "#c33";
    ctx.lineWidth = 1;
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(px(curve.m2_opt), pad);
    ctx.lineTo(px(curve.m2_opt), c.height - pad);
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = "#c33";
    ctx.fillText("m2* = " + curve.m2_opt.toFixed(4), px(curve.m2_opt) + 4, pad + 14);
  }
}

function refresh() {
  const json = JSON.stringify(design);
  try {
    const t = JSON.parse(theoryTable(json));
    fillTable(
      $("theory"),
      ["estimator", "without error", "meas. error", "non-response", "total"],
      t.rows.map((r) => [r.estimator, r.without_error, r.me_contribution, r.nr_contribution, r.total]),
    );
    $("coefficients").textContent =
      `b* = ${fmt(t.b_opt)}, m1* = ${fmt(t.m1_opt)}, m2* = ${fmt(t.m2_opt)}, ` +
      `gain over t1 = ${fmt(t.efficiency.gain_vs_t1)}, gain over t_r = ${fmt(t.efficiency.gain_vs_tr)}`;
    const lo = Math.min(0, t.m2_opt - 0.5), hi = Math.max(1, t.m2_opt + 0.5);
    drawCurve(JSON.parse(mseCurve(json, lo, hi, 201)));
    $("error").textContent = "";
  } catch (e) {
    $("error").textContent = e.message ?? String(e);
  }
}

function runSimulation() {
  try {
    const rep = JSON.parse(simulate(JSON.stringify(design), Number($("reps").value), Number($("seed").value)));
    fillTable(
      $("sim"),
      ["estimator", "empirical MSE", "s.e.", "theory MSE", "rel. deviation", "ratio undefined"],
      rep.run.estimators.map((e) => [e.name, e.empirical_mse, e.mse_se, e.theoretical_mse, e.rel_deviation, String(e.ratio_undefined)]),
    );
    $("error").textContent = "";
  } catch (e) {
    $("error").textContent = e.message ?? String(e);
  }
}

await init();
design = JSON.parse(referenceDesign());
buildForm();
refresh();
$("run").addEventListener("click", runSimulation);
