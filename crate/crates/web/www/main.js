import init, { solve, reduction_curve, optimal_step, Playground } from "./pkg/ptc_galerkin_web.js";

const $ = (id) => document.getElementById(id);

function colormap(s) {
  const t = Math.min(1, Math.max(0, s));
  return `rgb(${Math.round(255 * t)},${Math.round(80 + 100 * (1 - Math.abs(2 * t - 1)))},${Math.round(255 * (1 - t))})`;
}

function drawTriangles(ctx, verts, tris, lo, hi, fill) {
  const w = ctx.canvas.width, h = ctx.canvas.height;
  const sx = (x) => ((x - lo) / (hi - lo)) * (w - 20) + 10;
  const sy = (y) => h - 10 - ((y - lo) / (hi - lo)) * (h - 20);
  ctx.clearRect(0, 0, w, h);
  for (let c = 0; c < tris.length; c += 3) {
    ctx.beginPath();
    for (let k = 0; k < 3; k++) {
      const v = tris[c + k];
      const x = sx(verts[2 * v]), y = sy(verts[2 * v + 1]);
      k === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    }
    ctx.closePath();
    if (fill) {
      ctx.fillStyle = fill(tris[c], tris[c + 1], tris[c + 2]);
      ctx.fill();
    }
    ctx.strokeStyle = fill ? "rgba(0,0,0,0.15)" : "#333";
    ctx.lineWidth = 0.5;
    ctx.stroke();
  }
}

function drawHistory(ctx, dofs, totals, refine) {
  const w = ctx.canvas.width, h = ctx.canvas.height;
  ctx.clearRect(0, 0, w, h);
  const lx = Array.from(dofs, Math.log10), ly = Array.from(totals, Math.log10);
  const [x0, x1] = [Math.min(...lx), Math.max(...lx) + 1e-9];
  const [y0, y1] = [Math.min(...ly), Math.max(...ly) + 1e-9];
  const px = (x) => 40 + ((x - x0) / (x1 - x0)) * (w - 60);
  const py = (y) => h - 30 - ((y - y0) / (y1 - y0)) * (h - 50);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(40, 20, w - 60, h - 50);
  ctx.fillStyle = "#000";
  ctx.fillText("log10 DOF", w / 2, h - 8);
  ctx.fillText("log10 total", 2, 12);
  // slope -1/2 reference
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(px(x0), py(ly[0]));
  ctx.lineTo(px(x1), py(ly[0] - 0.5 * (x1 - x0)));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.strokeStyle = "#1565c0";
  ctx.beginPath();
  lx.forEach((x, i) => (i ? ctx.lineTo(px(x), py(ly[i])) : ctx.moveTo(px(x), py(ly[i]))));
  ctx.stroke();
  lx.forEach((x, i) => {
    ctx.fillStyle = refine[i] ? "#1565c0" : "#c62828";
    ctx.fillRect(px(x) - 2, py(ly[i]) - 2, 4, 4);
  });
}

function runSolve() {
  const eps = Math.pow(10, Number($("log-eps").value));
  $("status").textContent = "solving...";
  setTimeout(() => {
    const t = performance.now();
    try {
      const s = solve($("problem").value, eps, Number($("dof-max").value), Number($("theta").value));
      const values = s.values();
      const vmin = Math.min(...values), vmax = Math.max(...values);
      const scale = (v) => (vmax > vmin ? (v - vmin) / (vmax - vmin) : 0.5);
      drawTriangles($("field").getContext("2d"), s.vertices(), s.triangles(), s.lo(), s.hi(),
        (a, b, c) => colormap(scale((values[a] + values[b] + values[c]) / 3)));
      drawHistory($("history").getContext("2d"), s.log_dofs(), s.log_totals(), s.log_refine());
      const dofs = s.log_dofs();
      $("status").textContent = `ε = ${eps.toExponential()}: ${dofs.length} iterations, final DOF ${dofs[dofs.length - 1]}, ` +
        `u in [${vmin.toFixed(4)}, ${vmax.toFixed(4)}], ${(performance.now() - t).toFixed(0)} ms`;
      s.free();
    } catch (e) {
      $("status").textContent = `failed: ${e}`;
    }
  }, 10);
}

function drawGamma() {
  const mu = Math.pow(10, Number($("mu").value));
  const l = Math.pow(10, Number($("lip").value));
  const res = Math.pow(10, Number($("res").value));
  const pts = reduction_curve(mu, l, res, 1e-3, 1e3, 200);
  const ctx = $("gamma").getContext("2d");
  const w = ctx.canvas.width, h = ctx.canvas.height;
  ctx.clearRect(0, 0, w, h);
  const ymax = 2;
  const px = (t) => 40 + ((Math.log10(t) + 3) / 6) * (w - 60);
  const py = (g) => h - 30 - (Math.min(g, ymax) / ymax) * (h - 50);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(40, 20, w - 60, h - 50);
  ctx.beginPath();
  ctx.moveTo(40, py(1));
  ctx.lineTo(w - 20, py(1));
  ctx.stroke();
  ctx.fillStyle = "#000";
  ctx.fillText("log10 t", w / 2, h - 8);
  ctx.fillText("γ = 1", 4, py(1) + 4);
  ctx.strokeStyle = "#2e7d32";
  ctx.beginPath();
  for (let i = 0; i < pts.length; i += 2) {
    i ? ctx.lineTo(px(pts[i]), py(pts[i + 1])) : ctx.moveTo(px(pts[i]), py(pts[i + 1]));
  }
  ctx.stroke();
  const k = optimal_step(mu, l, res);
  let info = `μ = ${mu.toPrecision(3)}, L = ${l.toPrecision(3)}, ‖F‖ = ${res.toPrecision(3)}: `;
  if (Number.isNaN(k)) {
    info += "L‖F‖ ≤ μ², γ decreases for all t";
  } else {
    const g = reduction_curve(mu, l, res, k, k, 2)[1];
    info += `optimal t* = ${k.toPrecision(4)}, γ(t*) = ${g.toPrecision(4)}`;
    if (k >= 1e-3 && k <= 1e3) {
      ctx.fillStyle = "#c62828";
      ctx.beginPath();
      ctx.arc(px(k), py(g), 4, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
  $("gamma-info").textContent = info;
}

let playground;

function drawPlayground() {
  drawTriangles($("mesh").getContext("2d"), playground.vertices(), playground.triangles(), 0, 1, null);
  $("mesh-info").textContent = `${playground.cell_count()} triangles, ${playground.dof_count()} interior vertices, ` +
    `smallest angle ${playground.min_angle().toFixed(1)}°`;
}

await init();
$("solve").addEventListener("click", runSolve);
for (const id of ["mu", "lip", "res"]) $(id).addEventListener("input", drawGamma);
playground = new Playground(2);
$("reset").addEventListener("click", () => {
  playground.free();
  playground = new Playground(2);
  drawPlayground();
});
$("mesh").addEventListener("click", (ev) => {
  const r = ev.target.getBoundingClientRect();
  const w = ev.target.width, h = ev.target.height;
  const x = ((ev.clientX - r.left) * (w / r.width) - 10) / (w - 20);
  const y = (h - 10 - (ev.clientY - r.top) * (h / r.height)) / (h - 20);
  if (playground.refine_at(x, y)) drawPlayground();
});
drawGamma();
drawPlayground();
runSolve();
