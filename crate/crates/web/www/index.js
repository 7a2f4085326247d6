import init, { schedulersSvg, biasSvg, jumpSvg } from "./pkg/difflab_web.js";

const renderers = {
  schedulers: (v) => schedulersSvg(1.0, v.terminal),
  bias: (v) => biasSvg(v.mu, v.sigma2, v.terminal, Math.round(v.kmax)),
  jump: (v) => jumpSvg(v.p0, v.lambda, v.horizon, v.eps),
};

function values(section) {
  const v = {};
  for (const input of section.querySelectorAll("input")) {
    v[input.name] = Number(input.value);
    input.nextElementSibling.textContent = input.value;
  }
  return v;
}

function draw(section) {
  const plot = section.querySelector(".plot");
  const error = section.querySelector(".error");
  try {
    plot.innerHTML = renderers[section.id](values(section));
    error.textContent = "";
  } catch (e) {
    error.textContent = String(e.message ?? e);
  }
}

await init();
for (const id of Object.keys(renderers)) {
  const section = document.getElementById(id);
  section.addEventListener("input", () => draw(section));
  draw(section);
}
