import init, { simulate, zooming, bounds } from "./pkg/blin_wasm_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

const FILL = { "active": "#ffffff", "just-eliminated": "#555555", "eliminated-earlier": "#cccccc" };

let current = null;

function fail(el, err) {
  el.innerHTML = "";
  const p = document.createElement("p");
  p.className = "error";
  p.textContent = String(err);
  el.appendChild(p);
}

function table(rows, head) {
  const t = document.createElement("table");
  const tr = t.insertRow();
  for (const h of head) {
    const th = document.createElement("th");
    th.textContent = h;
    tr.appendChild(th);
  }
  for (const row of rows) {
    const r = t.insertRow();
    for (const cell of row) r.insertCell().textContent = cell;
  }
  return t;
}

function fmt(x) {
  if (x === null || x === undefined) return "";
  if (typeof x !== "number") return String(x);
  return Math.abs(x) >= 1e5 || (x !== 0 && Math.abs(x) < 1e-3) ? x.toExponential(3) : +x.toFixed(4) + "";
}

function drawPartition(i) {
  const cv = $("partition");
  const ctx = cv.getContext("2d");
  ctx.clearRect(0, 0, cv.width, cv.height);
  const snap = current && current.snapshots[i];
  if (!snap) {
    $("snap-label").textContent = current ? "no partition (zooming baseline)" : "";
    return;
  }
  const s = cv.width;
  for (const c of snap.cells) {
    // y grows upwards in the arm space
    const x = c.x * s, y = (1 - c.y - c.height) * s;
    ctx.fillStyle = FILL[c.state];
    ctx.fillRect(x, y, c.width * s, c.height * s);
    ctx.strokeStyle = "#888";
    ctx.strokeRect(x, y, c.width * s, c.height * s);
  }
  const b = current.batches[i];
  $("snap-label").textContent =
    `batch ${snap.batch}: edge ${fmt(b.edge)}, ${b.active_cubes} active, ${b.eliminated_cubes} eliminated`;
}

function drawCurve() {
  const cv = $("curve");
  const ctx = cv.getContext("2d");
  ctx.clearRect(0, 0, cv.width, cv.height);
  const pts = current.curve;
  const pad = 40;
  const w = cv.width - 2 * pad, h = cv.height - 2 * pad;
  const tMax = current.horizon;
  const rMax = Math.max(1e-9, ...pts.map((p) => p[1]));
  const X = (t) => pad + (t / tMax) * w;
  const Y = (r) => pad + h - (r / rMax) * h;

  ctx.strokeStyle = "#ddd";
  for (const t of current.grid) {
    ctx.beginPath();
    ctx.moveTo(X(t), pad);
    ctx.lineTo(X(t), pad + h);
    ctx.stroke();
  }
  ctx.strokeStyle = "#000";
  ctx.strokeRect(pad, pad, w, h);
  ctx.strokeStyle = "#1f5fbf";
  ctx.lineWidth = 2;
  ctx.beginPath();
  pts.forEach(([t, r], k) => (k ? ctx.lineTo(X(t), Y(r)) : ctx.moveTo(X(t), Y(r))));
  ctx.stroke();
  ctx.lineWidth = 1;
  ctx.fillStyle = "#000";
  ctx.fillText("0", pad - 12, pad + h + 4);
  ctx.fillText(fmt(rMax), 2, pad - 6);
  ctx.fillText(`t = ${tMax}`, pad + w - 50, pad + h + 16);
  ctx.fillText("cumulative regret (grey lines: batch ends)", pad, pad - 6);
}

function runSimulation() {
  try {
    const t0 = performance.now();
    current = JSON.parse(simulate($("sim-env").value, $("sim-alg").value, num("sim-T"), num("sim-seed"), num("sim-dz")));
    const ms = (performance.now() - t0).toFixed(0);
    $("status").textContent =
      `${current.algorithm}: rounds ${current.rounds_used}, final regret ${fmt(current.final_regret)} (${ms} ms)`;
    $("status").className = "";
    const slider = $("snap");
    slider.max = Math.max(0, current.snapshots.length - 1);
    slider.value = 0;
    drawPartition(0);
    drawCurve();
    $("batches").replaceWith(
      Object.assign(
        table(
          current.batches.map((b) => [b.index, b.kind, fmt(b.edge), b.samples, b.active_cubes, b.eliminated_cubes, b.first_t, b.last_t]),
          ["batch", "kind", "edge", "n per cube", "active", "eliminated", "first t", "last t"],
        ),
        { id: "batches" },
      ),
    );
  } catch (e) {
    $("status").className = "error";
    $("status").textContent = String(e);
  }
}

function runZooming() {
  const out = $("zoom-out");
  try {
    const z = JSON.parse(zooming($("zoom-env").value, num("zoom-depth")));
    out.innerHTML = "";
    const p = document.createElement("p");
    p.textContent = `dz ≈ ${fmt(z.dz_hat)}, Cz ≈ ${fmt(z.cz_hat)} (fit on scales 2^-${z.fit_depths.join(", 2^-")})`;
    out.appendChild(p);
    out.appendChild(table(z.table.map((row) => [`2^-${row.depth}`, row.count, row.exact ? "exact" : "upper"]), ["r", "N_r", ""]));
  } catch (e) {
    fail(out, e);
  }
}

function runBounds() {
  const out = $("b-out");
  try {
    const b = JSON.parse(bounds(num("b-d"), num("b-dz"), num("b-cz"), num("b-T"), num("b-B")));
    const keys = Object.keys(b).filter((k) => !["d", "dz", "cz", "horizon", "batches"].includes(k));
    out.innerHTML = "";
    out.appendChild(table(keys.map((k) => [k, fmt(b[k])]), ["quantity", "value"]));
  } catch (e) {
    fail(out, e);
  }
}

await init();
$("sim-go").onclick = runSimulation;
$("snap").oninput = (e) => drawPartition(Number(e.target.value));
$("zoom-go").onclick = runZooming;
$("b-go").onclick = runBounds;
runSimulation();
