// Static driver for the wasm demo. Build the bindings first:
//   wasm-pack build --target web crates/wasm --out-dir www/pkg
// then serve this directory.

import init, { catalog_names, sample_cloud, green_field, dimension_curve }
  from "./pkg/cpk_demo.js";

const WINDOW = 2.2; // chart half-width shown in the cloud / green panels

function fillSelects(names) {
  for (const id of ["cloud-map", "green-map", "dim-map"]) {
    const sel = document.getElementById(id);
    for (const n of names) {
      const opt = document.createElement("option");
      opt.value = n;
      opt.textContent = n;
      sel.appendChild(opt);
    }
  }
}

function drawCloud() {
  const map = document.getElementById("cloud-map").value;
  const depth = +document.getElementById("cloud-depth").value;
  const count = +document.getElementById("cloud-count").value;
  const seed = +document.getElementById("cloud-seed").value;
  const canvas = document.getElementById("cloud-canvas");
  const ctx = canvas.getContext("2d");
  ctx.fillStyle = "#0d0e11";
  ctx.fillRect(0, 0, canvas.width, canvas.height);

  let pts;
  try {
    pts = sample_cloud(map, depth, count, seed);
  } catch (e) {
    console.error(e);
    return;
  }
  const s = canvas.width / (2 * WINDOW);
  ctx.fillStyle = "rgba(127, 190, 255, 0.55)";
  for (let i = 0; i < pts.length; i += 2) {
    const x = (pts[i] + WINDOW) * s;
    const y = (WINDOW - pts[i + 1]) * s;
    if (x >= 0 && x < canvas.width && y >= 0 && y < canvas.height) {
      ctx.fillRect(x, y, 1.2, 1.2);
    }
  }
}

function drawGreen() {
  const map = document.getElementById("green-map").value;
  const res = +document.getElementById("green-res").value;
  const canvas = document.getElementById("green-canvas");
  const ctx = canvas.getContext("2d");

  let vals;
  try {
    vals = green_field(map, -WINDOW, WINDOW, -WINDOW, WINDOW, res, res);
  } catch (e) {
    console.error(e);
    return;
  }
  let max = 0;
  for (const v of vals) max = Math.max(max, v);
  const img = ctx.createImageData(res, res);
  for (let j = 0; j < res; j++) {
    for (let i = 0; i < res; i++) {
      const v = vals[j * res + i];
      const t = max > 0 ? Math.min(1, Math.max(0, v / max)) : 0;
      const idx = 4 * ((res - 1 - j) * res + i);
      if (v <= 1e-12) {
        // zero set of the potential
        img.data[idx] = 18; img.data[idx + 1] = 60; img.data[idx + 2] = 42;
      } else {
        // shaded level structure
        const band = 0.5 + 0.5 * Math.cos(24 * t);
        img.data[idx] = 40 + 180 * t * band;
        img.data[idx + 1] = 60 + 120 * t;
        img.data[idx + 2] = 110 + 130 * (1 - t) * band;
      }
      img.data[idx + 3] = 255;
    }
  }
  // scale the res x res image onto the canvas
  createImageBitmap(img).then((bmp) => {
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(bmp, 0, 0, canvas.width, canvas.height);
  });
}

function drawDimension() {
  const map = document.getElementById("dim-map").value;
  const count = +document.getElementById("dim-count").value;
  const seed = +document.getElementById("dim-seed").value;
  const canvas = document.getElementById("dim-canvas");
  const ctx = canvas.getContext("2d");
  const readout = document.getElementById("dim-readout");
  ctx.fillStyle = "#0d0e11";
  ctx.fillRect(0, 0, canvas.width, canvas.height);

  let data;
  try {
    data = JSON.parse(dimension_curve(map, 25, count, seed));
  } catch (e) {
    readout.textContent = `estimate failed: ${e}`;
    return;
  }
  const xs = [];
  const ys = [];
  for (let i = 0; i < data.radii.length; i++) {
    if (data.masses[i] > 0) {
      xs.push(Math.log(data.radii[i]));
      ys.push(Math.log(data.masses[i]));
    }
  }
  const pad = 34;
  const xmin = Math.min(...xs), xmax = Math.max(...xs);
  const ymin = Math.min(...ys), ymax = Math.max(...ys);
  const sx = (x) => pad + ((x - xmin) / (xmax - xmin)) * (canvas.width - 2 * pad);
  const sy = (y) => canvas.height - pad - ((y - ymin) / (ymax - ymin)) * (canvas.height - 2 * pad);

  // fit window shading
  const lo = Math.log(data.radii[data.fit_hi]);
  const hi = Math.log(data.radii[data.fit_lo]);
  ctx.fillStyle = "rgba(95, 140, 220, 0.15)";
  ctx.fillRect(sx(lo), pad / 2, sx(hi) - sx(lo), canvas.height - 1.5 * pad);

  // axes
  ctx.strokeStyle = "#343a45";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, canvas.height - pad);
  ctx.lineTo(canvas.width - pad / 2, canvas.height - pad);
  ctx.stroke();

  // curve
  ctx.strokeStyle = "#7fbeff";
  ctx.beginPath();
  xs.forEach((x, i) => (i === 0 ? ctx.moveTo(sx(x), sy(ys[i])) : ctx.lineTo(sx(x), sy(ys[i]))));
  ctx.stroke();
  ctx.fillStyle = "#d7dae0";
  xs.forEach((x, i) => ctx.fillRect(sx(x) - 1.5, sy(ys[i]) - 1.5, 3, 3));

  ctx.fillStyle = "#8b919c";
  ctx.fillText("log r", canvas.width - pad - 4, canvas.height - pad + 14);
  ctx.save();
  ctx.translate(12, pad + 40);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText("log mass", 0, 0);
  ctx.restore();

  readout.textContent =
    `slope = ${data.slope.toFixed(3)} ± ${data.ci95.toFixed(3)}  ` +
    `(window slopes ${data.slope_min5.toFixed(2)}…${data.slope_max5.toFixed(2)}, ` +
    `center ${data.center.re.toFixed(3)} + ${data.center.im.toFixed(3)}i)`;
}

async function main() {
  await init();
  fillSelects(JSON.parse(catalog_names()));
  document.getElementById("cloud-run").addEventListener("click", drawCloud);
  document.getElementById("green-run").addEventListener("click", drawGreen);
  document.getElementById("dim-run").addEventListener("click", drawDimension);
  drawCloud();
}

main();
