import init, { zeta_curve, sscti_demo, Evolver } from "./pkg/chsnn_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function fail(target, err) {
  target.innerHTML = "";
  const span = document.createElement("span");
  span.className = "err";
  span.textContent = String(err.message ?? err);
  target.appendChild(span);
}

// Draws a rows x cols grid; `shade` maps a value to 0..1 (1 = dark).
function heatmap(canvas, data, rows, cols, shade, cell = 4) {
  canvas.width = cols * cell;
  canvas.height = rows * cell;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(cols, rows);
  for (let i = 0; i < rows * cols; i++) {
    const v = Math.max(0, Math.min(1, shade(data[i])));
    img.data[4 * i] = 255 * (1 - v);
    img.data[4 * i + 1] = 255 * (1 - 0.6 * v);
    img.data[4 * i + 2] = 255 * (1 - 0.2 * v);
    img.data[4 * i + 3] = 255;
  }
  const tmp = new OffscreenCanvas(cols, rows);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
}

function plotZeta() {
  const z = zeta_curve(num("z0"), num("zep"));
  const c = $("zcanvas");
  const ctx = c.getContext("2d");
  const pad = 24;
  ctx.clearRect(0, 0, c.width, c.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad / 2, c.width - 1.5 * pad, c.height - 1.5 * pad);
  const top = Math.max(...z, 1e-9);
  const x = (i) => pad + (i / Math.max(1, z.length - 1)) * (c.width - 1.5 * pad);
  const y = (v) => c.height - pad - (v / top) * (c.height - 1.5 * pad);
  ctx.strokeStyle = "#1565c0";
  ctx.lineWidth = 2;
  ctx.beginPath();
  z.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
  const mid = Math.floor((z.length - 1) / 2);
  $("zstats").textContent =
    `start  ${z[0].toFixed(4)}\nmiddle ${z[mid].toFixed(4)} (epoch ${mid})\nend    ${z[z.length - 1].toFixed(4)}`;
}

function buildMask() {
  try {
    const blocks = new Uint32Array($("sblocks").value.split(",").map((s) => Number(s.trim())));
    const v = sscti_demo(blocks, num("srho"), num("sbeta"), num("ss"), 7n);
    const m = v.cols();
    heatmap($("sphi"), v.phi(), m, m, (p) => Math.abs(p), 6);
    heatmap($("smask"), v.mask(), v.rows(), m, (b) => b, 6);
    $("sstats").textContent =
      `links        ${v.links()}\nwithin block ${(100 * v.within_block()).toFixed(1)}%`;
    v.free();
  } catch (e) {
    fail($("sstats"), e);
  }
}

let evolver = null;

function resetEvolver() {
  try {
    evolver?.free();
    evolver = new Evolver(num("ein"), num("ehid"), num("es"), 11n);
    drawEvolver();
  } catch (e) {
    evolver = null;
    fail($("estats"), e);
  }
}

function drawEvolver() {
  const ev = evolver;
  const scores = ev.scores();
  const top = Math.max(...scores, 1e-9);
  heatmap($("emask"), ev.mask(), ev.rows(), ev.cols(), (b) => b, 5);
  heatmap($("escore"), scores, ev.rows(), ev.cols(), (s) => s / top, 5);
  $("estats").textContent = [
    `step           ${ev.steps()}`,
    `links          ${ev.links()}`,
    `sparsity       ${(100 * ev.sparsity()).toFixed(2)}%`,
    `active hidden  ${ev.active_hidden()} / ${ev.rows()}`,
    `last pruned    ${ev.last_pruned()}`,
    `last removed   ${ev.last_removed()} neurons`,
    `max score      ${top.toFixed(3)}`,
  ].join("\n");
}

function stepEvolver(times) {
  if (!evolver) return;
  try {
    for (let i = 0; i < times; i++) evolver.step(num("ez"));
    drawEvolver();
  } catch (e) {
    fail($("estats"), e);
  }
}

await init();
$("zbtn").onclick = plotZeta;
$("sbtn").onclick = buildMask;
$("ereset").onclick = resetEvolver;
$("estep").onclick = () => stepEvolver(1);
$("erun").onclick = () => stepEvolver(10);
plotZeta();
buildMask();
resetEvolver();
