import init, { sparsity_curves, rotated_beta, rho_curve } from "./pkg/rotsolve_demo.js";

const COLORS = ["#1b6ca8", "#d1495b", "#2e8b57", "#8a5cf6"];
const canvas = document.getElementById("plot");
const ctx = canvas.getContext("2d");
const status = document.getElementById("status");
const legend = document.getElementById("legend");

function value(id) {
  return document.getElementById(id).value;
}

function params() {
  return {
    model: value("model"),
    p: parseInt(value("p"), 10),
    level: parseFloat(value("level")),
    rho: parseFloat(value("rho")),
    n: parseInt(value("n"), 10),
    reps: parseInt(value("reps"), 10),
    seed: parseInt(value("seed"), 10) >>> 0,
  };
}

function setStatus(text, isError = false) {
  status.textContent = text;
  status.className = isError ? "error" : "";
}

function setLegend(names) {
  legend.innerHTML = names
    .map((name, i) => `<span style="color:${COLORS[i % COLORS.length]}">■ ${name}</span>`)
    .join("");
}

// Plot frame: returns mappers from data to pixel coordinates.
function frame(xmin, xmax, ymin, ymax, opts = {}) {
  const pad = { left: 60, right: 20, top: 20, bottom: 40 };
  const w = canvas.width - pad.left - pad.right;
  const h = canvas.height - pad.top - pad.bottom;
  const logx = opts.logx === true;
  const tx = (x) => (logx ? Math.log10(x) : x);
  const x0 = tx(xmin);
  const x1 = tx(xmax);
  const sx = (x) => pad.left + ((tx(x) - x0) / (x1 - x0 || 1)) * w;
  const sy = (y) => pad.top + h - ((y - ymin) / (ymax - ymin || 1)) * h;

  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  ctx.strokeRect(pad.left, pad.top, w, h);
  ctx.fillStyle = "#444";
  ctx.font = "12px system-ui";
  for (let i = 0; i <= 4; i++) {
    const y = ymin + ((ymax - ymin) * i) / 4;
    ctx.fillText(y.toFixed(3), 4, sy(y) + 4);
  }
  ctx.fillText(opts.xlabel ?? "", pad.left + w / 2 - 30, canvas.height - 8);
  ctx.fillText(String(xmin), pad.left, canvas.height - 24);
  const right = String(xmax);
  ctx.fillText(right, pad.left + w - ctx.measureText(right).width, canvas.height - 24);
  if (ymin < 0 && ymax > 0) {
    ctx.beginPath();
    ctx.moveTo(pad.left, sy(0));
    ctx.lineTo(pad.left + w, sy(0));
    ctx.stroke();
  }
  return { sx, sy };
}

function line(points, color, sx, sy) {
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  points.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(sx(x), sy(y)) : ctx.lineTo(sx(x), sy(y))));
  ctx.stroke();
  ctx.fillStyle = color;
  points.forEach(([x, y]) => ctx.fillRect(sx(x) - 2, sy(y) - 2, 4, 4));
}

function drawCurves(data) {
  const p = data.raw.length;
  const { sx, sy } = frame(1, p, 0, 1, { xlabel: "number of largest coordinates" });
  const series = [
    ["raw β", data.raw],
    ["population rotation", data.oracle],
    ["estimated rotation (average)", data.empirical],
  ];
  series.forEach(([, ys], i) => line(ys.map((y, j) => [j + 1, y]), COLORS[i], sx, sy));
  setLegend(series.map(([name]) => name));
  setStatus(`Share of ‖β‖² in the largest coordinates. Bayes error ${data.bayes_error.toFixed(4)}.`);
}

function drawBeta(data) {
  const p = data.beta.length;
  const all = data.beta.concat(data.rotated).map(Math.abs);
  const top = Math.max(...all, 1e-12);
  const { sx, sy } = frame(0, p, -top, top, { xlabel: "coordinate" });
  const barW = Math.max(1, (sx(1) - sx(0)) / 2 - 1);
  [data.beta, data.rotated].forEach((v, k) => {
    ctx.fillStyle = COLORS[k];
    v.forEach((y, j) => {
      const x = sx(j) + k * barW;
      const y0 = sy(0);
      const y1 = sy(y);
      ctx.fillRect(x, Math.min(y0, y1), barW, Math.abs(y1 - y0));
    });
  });
  setLegend(["β", "Uᵀβ"]);
  setStatus(
    `Nonzero coordinates: β ${data.raw_l0}, Uᵀβ ${data.rotated_l0}. ` +
      `ℓ1/ℓ2: β ${data.raw_l1_l2.toFixed(3)}, Uᵀβ ${data.rotated_l1_l2.toFixed(3)}.`
  );
}

function drawRho(rows) {
  const ys = rows.flatMap((r) => [r.road, r.rs_road, r.oracle]).filter((y) => y !== null);
  const lo = Math.max(0, Math.min(...ys) - 0.02);
  const hi = Math.max(...ys) + 0.02;
  const { sx, sy } = frame(rows[0].rho, rows[rows.length - 1].rho, lo, hi, { logx: true, xlabel: "ρ (log scale)" });
  const keys = [
    ["ROAD", "road"],
    ["RS-ROAD", "rs_road"],
    ["oracle", "oracle"],
  ];
  keys.forEach(([, key], i) => {
    const pts = rows.filter((r) => r[key] !== null).map((r) => [r.rho, r[key]]);
    line(pts, COLORS[i], sx, sy);
  });
  setLegend(keys.map(([name]) => name));
  setStatus("Mean test error across replicates at each ρ.");
}

// Runs `work` after the status text has painted, since the computation blocks the page.
function run(label, work) {
  setStatus(`${label}…`);
  requestAnimationFrame(() =>
    setTimeout(() => {
      try {
        work();
      } catch (err) {
        setStatus(String(err.message ?? err), true);
      }
    }, 0)
  );
}

document.getElementById("run-curves").addEventListener("click", () =>
  run("Computing energy curves", () => {
    const q = params();
    drawCurves(JSON.parse(sparsity_curves(q.model, q.p, q.level, q.rho, q.n, q.reps, q.seed)));
  })
);

document.getElementById("run-beta").addEventListener("click", () =>
  run("Rotating β", () => {
    const q = params();
    drawBeta(JSON.parse(rotated_beta(q.model, q.p, q.level, q.rho, q.seed)));
  })
);

document.getElementById("run-rho").addEventListener("click", () =>
  run("Running replicates across ρ", () => {
    const q = params();
    drawRho(JSON.parse(rho_curve(q.model, q.p, q.level, q.n, q.reps, q.seed, 0.01, 100, 9)));
  })
);

init().then(
  () => setStatus("Ready. Pick a model and an operation."),
  (err) => setStatus(`Failed to load the WebAssembly module: ${err}`, true)
);
