const http = require('http');

const products = [];

function formFields(body) {
  const fields = {};
  for (const pair of body.split('&')) {
    if (!pair) continue;
    const [key, value] = pair.split('=');
    fields[decodeURIComponent(key)] = decodeURIComponent((value || '').replace(/\+/g, ' '));
  }
  return fields;
}

function page() {
  return `<!doctype html>
<html>
<head><title>Corner Shop</title></head>
<body>
<h1>Corner Shop</h1>
<form method="post" action="/products">
  <label for="name">Product name</label>
  <input id="name" name="name" type="text">
  <button type="submit">Post</button>
</form>
<p>${products.length} product(s) posted</p>
</body>
</html>
`;
}

const server = http.createServer((req, res) => {
  if (req.method === 'POST' && req.url === '/products') {
    let body = '';
    req.on('data', (chunk) => { body += chunk; });
    req.on('end', () => {
      const name = formFields(body).name;
      if (name) {
        products.push(name);
      }
      res.writeHead(200, { 'Content-Type': 'text/html' });
      res.end(page());
    });
    return;
  }
  res.writeHead(200, { 'Content-Type': 'text/html' });
  res.end(page());
});

server.listen(process.env.PORT || 3000);
